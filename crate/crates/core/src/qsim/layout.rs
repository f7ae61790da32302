use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};

/// Widest register file a packed label may describe.
pub const MAX_LAYOUT_BITS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub offset: u32,
    pub width: u32,
}

impl Register {
    pub fn mask(&self) -> u64 {
        if self.width == 64 {
            u64::MAX
        } else {
            ((1u64 << self.width) - 1) << self.offset
        }
    }

    /// Absolute bit positions of this register, least significant first.
    pub fn bits(&self) -> impl Iterator<Item = u32> {
        self.offset..self.offset + self.width
    }
}

/// Named registers packed into the low bits of a `u64` basis label.
///
/// Registers are allocated in insertion order starting from bit 0; bits inside
/// a register are little-endian.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    regs: Vec<Register>,
    width: u32,
}

impl RegisterLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a layout from `(name, width)` pairs.
    pub fn from_widths<'a>(spec: impl IntoIterator<Item = (&'a str, u32)>) -> Result<Self> {
        let mut layout = Self::new();
        for (name, width) in spec {
            layout.push(name, width)?;
        }
        Ok(layout)
    }

    pub fn push(&mut self, name: &str, width: u32) -> Result<&Register> {
        if self.regs.iter().any(|r| r.name == name) {
            return Err(param(format!("duplicate register {name}")));
        }
        if width == 0 {
            return Err(param(format!("register {name} has zero width")));
        }
        if self.width + width > MAX_LAYOUT_BITS {
            return Err(param(format!(
                "layout would need {} bits, cap is {MAX_LAYOUT_BITS}",
                self.width + width
            )));
        }
        self.regs.push(Register {
            name: name.to_string(),
            offset: self.width,
            width,
        });
        self.width += width;
        Ok(self.regs.last().unwrap())
    }

    pub fn with(mut self, name: &str, width: u32) -> Result<Self> {
        self.push(name, width)?;
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn has(&self, name: &str) -> bool {
        self.regs.iter().any(|r| r.name == name)
    }

    pub fn reg(&self, name: &str) -> Result<&Register> {
        self.regs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| domain(format!("register {name} absent from layout")))
    }

    /// Reads register `name` out of `label`. Panics if the register is absent.
    pub fn get(&self, label: u64, name: &str) -> u64 {
        let r = self.reg(name).expect("register present");
        (label & r.mask()) >> r.offset
    }

    /// Overwrites register `name` in `label`. Panics if the register is absent.
    pub fn set(&self, label: u64, name: &str, value: u64) -> u64 {
        let r = self.reg(name).expect("register present");
        debug_assert!(
            r.width == 64 || value >> r.width == 0,
            "value overflows {name}"
        );
        (label & !r.mask()) | ((value << r.offset) & r.mask())
    }

    /// Bit position of qubit `i` (little-endian) of register `name`.
    pub fn bit(&self, name: &str, i: u32) -> Result<u32> {
        let r = self.reg(name)?;
        if i >= r.width {
            return Err(domain(format!("qubit {i} outside register {name}")));
        }
        Ok(r.offset + i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_and_reads() {
        let l = RegisterLayout::from_widths([("B", 1), ("X", 4), ("Y", 5)]).unwrap();
        let label = l.set(l.set(l.set(0, "B", 1), "X", 0b1010), "Y", 0b10011);
        assert_eq!(l.get(label, "B"), 1);
        assert_eq!(l.get(label, "X"), 0b1010);
        assert_eq!(l.get(label, "Y"), 0b10011);
        assert_eq!(l.width(), 10);
    }

    #[test]
    fn rejects_duplicates_and_overflow() {
        assert!(RegisterLayout::from_widths([("A", 1), ("A", 2)]).is_err());
        assert!(RegisterLayout::from_widths([("A", 30), ("B", 11)]).is_err());
        assert!(RegisterLayout::from_widths([("A", 0)]).is_err());
    }
}
