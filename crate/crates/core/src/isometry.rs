//! Isometries of the Cantor set, truncated at a finite depth.
//!
//! Every isometry acts on each level by a bijection `g_m` of the level-`m`
//! words, and the family is consistent: `g_m(v)` extends `g_{m-1}(π_{m-1} v)`.
//! Consistent families are exactly the ones obtained by choosing, for every
//! node `u` of the binary tree, whether to swap the two subtrees below `u`.
//! That choice is what [`Isometry`] stores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Error, Result};
use crate::word::Word;

/// Cap on isometry depth; the swap table holds `2^depth - 1` bits.
pub const MAX_ISOMETRY_DEPTH: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Isometry {
    depth: u32,
    /// One bit per internal node; node `u` of level `j` lives at `2^j - 1 + index(u)`.
    swaps: Vec<u64>,
}

#[inline]
fn node_slot(node: &Word) -> usize {
    (1usize << node.level()) - 1 + node.index()
}

impl Isometry {
    fn with_depth(depth: u32) -> Result<Self> {
        if depth > MAX_ISOMETRY_DEPTH {
            return Err(Error::Resource {
                what: "isometry depth",
                requested: depth as u64,
                limit: MAX_ISOMETRY_DEPTH as u64,
            });
        }
        let nodes = (1usize << depth) - 1;
        Ok(Isometry {
            depth,
            swaps: vec![0; nodes.div_ceil(64)],
        })
    }

    pub fn identity(depth: u32) -> Result<Self> {
        Self::with_depth(depth)
    }

    /// Digit-wise complement at every level.
    pub fn complement(depth: u32) -> Result<Self> {
        Self::from_swaps(depth, |_| true)
    }

    /// Builds the isometry whose node `u` swaps its children iff `swap(u)`.
    pub fn from_swaps(depth: u32, mut swap: impl FnMut(&Word) -> bool) -> Result<Self> {
        let mut g = Self::with_depth(depth)?;
        for level in 0..depth {
            for node in Word::all(level) {
                if swap(&node) {
                    g.set_swap(&node);
                }
            }
        }
        Ok(g)
    }

    /// Recovers the swap table from explicit level bijections
    /// `maps[m-1][index(v)] = index(g_m(v))`, rejecting families that are not
    /// bijective or violate consistency.
    pub fn from_level_maps(maps: &[Vec<usize>]) -> Result<Self> {
        let depth = maps.len() as u32;
        let mut g = Self::with_depth(depth)?;
        for (i, map) in maps.iter().enumerate() {
            let m = i as u32 + 1;
            let size = 1usize << m;
            if map.len() != size {
                return Err(usage(format!("level-{m} map has {} entries, expected {size}", map.len())));
            }
            let mut seen = vec![false; size];
            for &image in map {
                if image >= size || std::mem::replace(&mut seen[image], true) {
                    return Err(usage(format!("level-{m} map is not a bijection")));
                }
            }
            for (src, &image) in map.iter().enumerate() {
                let v = Word::from_index(src, m);
                let gv = Word::from_index(image, m);
                let parent = v.prefix(m - 1);
                let parent_image = if m == 1 {
                    Word::EMPTY
                } else {
                    Word::from_index(maps[i - 1][parent.index()], m - 1)
                };
                if gv.prefix(m - 1) != parent_image {
                    return Err(usage(format!(
                        "level-{m} map sends {v} to {gv}, inconsistent with level {}",
                        m - 1
                    )));
                }
                if v.digit(m) == 0 && gv.digit(m) == 1 {
                    g.set_swap(&parent);
                }
            }
        }
        Ok(g)
    }

    fn set_swap(&mut self, node: &Word) {
        let slot = node_slot(node);
        self.swaps[slot / 64] |= 1 << (slot % 64);
    }

    #[inline]
    pub fn swaps_at(&self, node: &Word) -> bool {
        debug_assert!(node.level() < self.depth);
        let slot = node_slot(node);
        self.swaps[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `g_{level(x)}(x)`.
    pub fn apply(&self, x: &Word) -> Result<Word> {
        if x.level() > self.depth {
            return Err(usage(format!(
                "word of level {} exceeds isometry depth {}",
                x.level(),
                self.depth
            )));
        }
        let n = x.level();
        let mut bits = x.bits();
        for k in 1..=n {
            if self.swaps_at(&x.prefix(k - 1)) {
                bits ^= 1 << (n - k);
            }
        }
        Word::new(bits, n)
    }

    /// The bijection `g_m` as an index table.
    pub fn level_map(&self, m: u32) -> Result<Vec<usize>> {
        if m > self.depth {
            return Err(usage(format!("level {m} exceeds isometry depth {}", self.depth)));
        }
        Word::all(m).map(|v| self.apply(&v).map(|gv| gv.index())).collect()
    }

    /// Checks bijectivity and the prefix-consistency condition of every level map.
    pub fn is_consistent(&self) -> bool {
        let mut previous: Vec<usize> = vec![0];
        for m in 1..=self.depth {
            let Ok(map) = self.level_map(m) else { return false };
            let mut seen = vec![false; map.len()];
            for (src, &image) in map.iter().enumerate() {
                if std::mem::replace(&mut seen[image], true) {
                    return false;
                }
                if image >> 1 != previous[src >> 1] {
                    return false;
                }
            }
            previous = map;
        }
        true
    }
}

/// A uniformly random isometry of the given depth: one fair coin per tree node.
pub fn random_isometry(depth: u32, seed: u64) -> Result<Isometry> {
    if depth < 1 {
        return Err(usage("isometry depth must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Isometry::from_swaps(depth, |_| rng.random_bool(0.5))
}
