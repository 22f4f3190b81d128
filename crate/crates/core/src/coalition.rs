use std::fmt;

use smallvec::SmallVec;

/// A subset of players `0..n`, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    n: usize,
    words: SmallVec<[u64; 2]>,
    card: usize,
}

fn word_count(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: SmallVec::from_elem(0, word_count(n)),
            card: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for w in 0..c.words.len() {
            c.words[w] = u64::MAX;
        }
        c.mask_tail();
        c.card = n;
        c
    }

    /// Builds a coalition from the low `n` bits of `mask` (`n <= 64`).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        assert!(n <= 64, "from_mask supports at most 64 players");
        let mut c = Self::empty(n);
        c.words[0] = mask;
        c.mask_tail();
        c.card = c.words[0].count_ones() as usize;
        c
    }

    pub fn from_members(n: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::empty(n);
        for i in members {
            c.insert(i);
        }
        c
    }

    fn mask_tail(&mut self) {
        let rem = self.n % 64;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        } else if self.n == 0 {
            self.words[0] = 0;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of members `|S|`.
    pub fn len(&self) -> usize {
        self.card
    }

    pub fn is_empty(&self) -> bool {
        self.card == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Adds player `i`; returns false if it was already present.
    pub fn insert(&mut self, i: usize) -> bool {
        assert!(i < self.n, "player {i} out of range for n = {}", self.n);
        let bit = 1u64 << (i % 64);
        let w = &mut self.words[i / 64];
        if *w & bit != 0 {
            return false;
        }
        *w |= bit;
        self.card += 1;
        true
    }

    pub fn remove(&mut self, i: usize) -> bool {
        if !self.contains(i) {
            return false;
        }
        self.words[i / 64] &= !(1u64 << (i % 64));
        self.card -= 1;
        true
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
        self.card = 0;
    }

    pub fn complement(&self) -> Self {
        let mut c = Self {
            n: self.n,
            words: self.words.iter().map(|w| !w).collect(),
            card: self.n - self.card,
        };
        c.mask_tail();
        c
    }

    pub fn is_subset(&self, other: &Coalition) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The low word as a mask, when `n <= 64`.
    pub fn as_u64(&self) -> Option<u64> {
        (self.n <= 64).then(|| self.words[0])
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}
