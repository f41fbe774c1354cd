//! Spanwise level / within-level position indexing of pair keys.

use serde::{Deserialize, Serialize};

use super::{BladeError, PairKey};

/// Pairs grouped bottom-to-top into levels, row-major by pair index.
///
/// The default groups the 15 pairs `2+17 ..= 16+31` into 5 levels of 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelLayout {
    pub first_pressure_point: u32,
    pub pair_count: u32,
    pub pairs_per_level: u32,
}

impl Default for LevelLayout {
    fn default() -> Self {
        Self { first_pressure_point: 2, pair_count: 15, pairs_per_level: 3 }
    }
}

impl LevelLayout {
    fn index(&self, key: PairKey) -> Result<u32, BladeError> {
        let p = key.pressure_point();
        if p < self.first_pressure_point || p >= self.first_pressure_point + self.pair_count {
            return Err(BladeError::OutsideLayout(key));
        }
        Ok(p - self.first_pressure_point)
    }

    /// 1-based spanwise level.
    pub fn rb_compute_level(&self, key: PairKey) -> Result<u32, BladeError> {
        Ok(self.index(key)? / self.pairs_per_level.max(1) + 1)
    }

    /// 1-based position within the level.
    pub fn rb_compute_position_in_level(&self, key: PairKey) -> Result<u32, BladeError> {
        Ok(self.index(key)? % self.pairs_per_level.max(1) + 1)
    }

    pub fn locate(&self, key: &str) -> Result<(u32, u32), BladeError> {
        let key: PairKey = key.parse()?;
        Ok((self.rb_compute_level(key)?, self.rb_compute_position_in_level(key)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners() {
        let l = LevelLayout::default();
        assert_eq!(l.locate("2+17").unwrap(), (1, 1));
        assert_eq!(l.locate("4+19").unwrap(), (1, 3));
        assert_eq!(l.locate("5+20").unwrap(), (2, 1));
        assert_eq!(l.locate("16+31").unwrap(), (5, 3));
        assert!(matches!(l.locate("2+18"), Err(BladeError::MalformedPairKey(_))));
        assert!(matches!(l.locate("17+32"), Err(BladeError::OutsideLayout(_))));
    }

    #[test]
    fn layout_oracle() {
        // Enumerate the grid and compare with the index mapping.
        let l = LevelLayout::default();
        let mut p = 2;
        for level in 1..=5 {
            for pos in 1..=3 {
                assert_eq!(l.locate(&PairKey::new(p).to_string()).unwrap(), (level, pos));
                p += 1;
            }
        }
    }
}
