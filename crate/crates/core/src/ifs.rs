//! Iterated function systems as values: probability handling, word
//! composition, k-th iterate systems, average contractivity, contractive-word
//! search and the critical probability of two-map systems.

use crate::affine::AffineMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of words `N^k` enumerated by iterate
/// construction and word sums.
pub const DEFAULT_WORD_CAP: u64 = 1 << 20;

/// Slack below 1 a word's Lipschitz constant must clear to count as
/// contractive.
pub const CONTRACTIVE_MARGIN: f64 = 1e-12;

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IfsError {
    #[error("a word must contain at least one letter")]
    EmptyWord,
    #[error("letter {letter} is not a valid map index for a system of {count} maps")]
    InvalidIndex { letter: u8, count: usize },
    #[error("word enumeration would produce {words} words, above the cap {cap}")]
    SizeLimit { words: u128, cap: u64 },
    #[error("operation requires a probability vector but the system has none")]
    MissingProbabilities,
    #[error("probability p_{index} = {value} is not strictly positive")]
    NonpositiveProbability { index: usize, value: f64 },
    #[error("invalid probability vector: {reason}")]
    InvalidProbability { reason: String },
    #[error("operation requires exactly {expected} maps, system has {got}")]
    WrongArity { expected: usize, got: usize },
}

/// A finite word over the map indices `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(letters: Vec<u8>) -> Result<Self, IfsError> {
        if letters.is_empty() {
            return Err(IfsError::EmptyWord);
        }
        Ok(Word(letters))
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// An ordered family of affine maps with an optional probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSystem {
    maps: Vec<AffineMap>,
    probs: Option<Vec<f64>>,
}

impl IfsSystem {
    pub fn new(maps: Vec<AffineMap>) -> Result<Self, IfsError> {
        if maps.is_empty() {
            return Err(IfsError::InvalidProbability {
                reason: "a system needs at least one map".into(),
            });
        }
        Ok(IfsSystem { maps, probs: None })
    }

    pub fn with_probs(maps: Vec<AffineMap>, probs: Vec<f64>) -> Result<Self, IfsError> {
        let mut s = Self::new(maps)?;
        if probs.len() != s.maps.len() {
            return Err(IfsError::InvalidProbability {
                reason: format!("{} probabilities for {} maps", probs.len(), s.maps.len()),
            });
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(IfsError::InvalidProbability {
                    reason: format!("p_{} = {} is not a finite nonnegative number", i + 1, p),
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(IfsError::InvalidProbability {
                reason: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        s.probs = Some(probs);
        Ok(s)
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> Option<&[f64]> {
        self.probs.as_deref()
    }

    /// Map with 1-based index `letter`.
    pub fn map(&self, letter: u8) -> Result<&AffineMap, IfsError> {
        self.maps
            .get(letter as usize - 1)
            .ok_or(IfsError::InvalidIndex {
                letter,
                count: self.maps.len(),
            })
    }

    /// The same maps with uniform probabilities.
    pub fn with_uniform_probs(&self) -> IfsSystem {
        let n = self.maps.len();
        IfsSystem {
            maps: self.maps.clone(),
            probs: Some(vec![1.0 / n as f64; n]),
        }
    }

    /// Probability vector, checked strictly positive.
    pub fn strict_probs(&self) -> Result<&[f64], IfsError> {
        let probs = self.probs().ok_or(IfsError::MissingProbabilities)?;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(IfsError::NonpositiveProbability {
                    index: i + 1,
                    value: p,
                });
            }
        }
        Ok(probs)
    }

    /// Composition along a word: `f_{w1} . f_{w2} . ... . f_{wn}` (the first
    /// letter is the outermost map, applied last).
    pub fn compose_word(&self, word: &Word) -> Result<AffineMap, IfsError> {
        let mut acc = *self.map(word.letters()[0])?;
        for &l in &word.letters()[1..] {
            acc = acc.compose(self.map(l)?);
        }
        Ok(acc)
    }

    fn check_word_count(&self, k: u32, cap: u64) -> Result<u64, IfsError> {
        let words = (self.maps.len() as u128).pow(k);
        if words > cap as u128 {
            return Err(IfsError::SizeLimit { words, cap });
        }
        Ok(words as u64)
    }

    /// The k-th iterate system: one map per word of length `k` in
    /// lexicographic order, probabilities multiplied along the word.
    pub fn iterate_system(&self, k: u32) -> Result<IfsSystem, IfsError> {
        self.iterate_system_capped(k, DEFAULT_WORD_CAP)
    }

    pub fn iterate_system_capped(&self, k: u32, cap: u64) -> Result<IfsSystem, IfsError> {
        assert!(k >= 1, "iterate requires k >= 1");
        if let Some(probs) = self.probs() {
            // Revalidate: construction allows zero entries, iterates inherit them.
            let _ = IfsSystem::with_probs(self.maps.clone(), probs.to_vec())?;
        }
        self.check_word_count(k, cap)?;
        let mut maps = Vec::new();
        let mut probs = Vec::new();
        self.for_each_word(k, &mut |map, p, _| {
            maps.push(map);
            probs.push(p);
        });
        let mut out = IfsSystem { maps, probs: None };
        if self.probs.is_some() {
            out.probs = Some(probs);
        }
        Ok(out)
    }

    /// Visits all words of length `k` in lexicographic order, passing the
    /// composed map, the product probability (1 when absent) and the word.
    fn for_each_word(&self, k: u32, visit: &mut impl FnMut(AffineMap, f64, &[u8])) {
        let probs = self.probs().unwrap_or(&[]);
        let mut word = Vec::with_capacity(k as usize);
        self.rec_words(k, AffineMap::IDENTITY, 1.0, probs, &mut word, visit);
    }

    fn rec_words(
        &self,
        remaining: u32,
        prefix: AffineMap,
        p: f64,
        probs: &[f64],
        word: &mut Vec<u8>,
        visit: &mut impl FnMut(AffineMap, f64, &[u8]),
    ) {
        if remaining == 0 {
            visit(prefix, p, word);
            return;
        }
        for (i, f) in self.maps.iter().enumerate() {
            let q = probs.get(i).copied().unwrap_or(1.0);
            word.push(i as u8 + 1);
            self.rec_words(remaining - 1, prefix.compose(f), p * q, probs, word, visit);
            word.pop();
        }
    }

    /// `sum over words w of length k of p_w * Lip(f_w)`.
    pub fn average_contractivity(&self, k: u32) -> Result<f64, IfsError> {
        assert!(k >= 1, "average contractivity requires k >= 1");
        self.strict_probs()?;
        self.check_word_count(k, DEFAULT_WORD_CAP)?;
        let mut sum = 0.0;
        self.for_each_word(k, &mut |map, p, _| sum += p * map.lipschitz());
        Ok(sum)
    }

    /// Smallest `k <= max_k` whose iterate is contractive on average.
    pub fn min_average_contractive_k(&self, max_k: u32) -> Result<Option<u32>, IfsError> {
        for k in 1..=max_k {
            if self.average_contractivity(k)? < 1.0 {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    /// Shortest word whose composition is a contraction, searched
    /// breadth-first by length. Within a length, constant words i^len are
    /// preferred (smallest i first) since they yield constant periodic
    /// witness addresses; otherwise the lexicographically least word wins.
    /// Probabilities are not needed.
    pub fn find_contractive_word(&self, max_len: u32) -> Option<(Word, f64)> {
        for len in 1..=max_len {
            if self.check_word_count(len, DEFAULT_WORD_CAP).is_err() {
                return None;
            }
            for letter in 1..=self.maps.len() as u8 {
                let word = Word(vec![letter; len as usize]);
                let lip = self
                    .compose_word(&word)
                    .expect("letters are in range")
                    .lipschitz();
                if lip < 1.0 - CONTRACTIVE_MARGIN {
                    return Some((word, lip));
                }
            }
            let mut found: Option<(Word, f64)> = None;
            self.for_each_word(len, &mut |map, _, word| {
                if found.is_none() {
                    let lip = map.lipschitz();
                    if lip < 1.0 - CONTRACTIVE_MARGIN {
                        found = Some((Word(word.to_vec()), lip));
                    }
                }
            });
            if found.is_some() {
                return found;
            }
        }
        None
    }

    /// For a two-map system: the supremum of `p1` such that the k-th iterate
    /// with probabilities `(p1, 1 - p1)` is contractive on average, located
    /// by bisection on the boundary crossing adjacent to the feasible region.
    /// `None` when the average is below 1 for every `p1` or for none.
    pub fn critical_probability(&self, k: u32) -> Result<Option<f64>, IfsError> {
        if self.maps.len() != 2 {
            return Err(IfsError::WrongArity {
                expected: 2,
                got: self.maps.len(),
            });
        }
        self.check_word_count(k, DEFAULT_WORD_CAP)?;
        // Per word: Lipschitz constant and how many letters equal 1, so the
        // average is the polynomial sum of lip * p^c1 * (1-p)^(k-c1).
        let mut terms: Vec<(u32, f64)> = Vec::new();
        self.for_each_word(k, &mut |map, _, word| {
            let c1 = word.iter().filter(|&&l| l == 1).count() as u32;
            terms.push((c1, map.lipschitz()));
        });
        let avg = |p: f64| -> f64 {
            terms
                .iter()
                .map(|&(c1, lip)| lip * p.powi(c1 as i32) * (1.0 - p).powi((k - c1) as i32))
                .sum()
        };

        const GRID: usize = 1024;
        let feasible: Vec<bool> = (0..=GRID)
            .map(|i| avg(i as f64 / GRID as f64) < 1.0)
            .collect();
        if feasible.iter().all(|&f| f) || feasible.iter().all(|&f| !f) {
            return Ok(None);
        }
        let hi_index = feasible.iter().rposition(|&f| f).expect("not all infeasible");
        if hi_index == GRID {
            return Ok(Some(1.0));
        }
        let mut lo = hi_index as f64 / GRID as f64;
        let mut hi = (hi_index + 1) as f64 / GRID as f64;
        for _ in 0..200 {
            if hi - lo < 1e-10 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if avg(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{Mat2, Vec2};
    use crate::systems::{barnsley_vince, constants, final_example};
    use proptest::prelude::*;

    fn bv() -> IfsSystem {
        barnsley_vince(0.5).unwrap().system
    }

    fn word(letters: &[u8]) -> Word {
        Word::new(letters.to_vec()).unwrap()
    }

    #[test]
    fn compose_word_examples() {
        let s = bv();
        let f22 = s.compose_word(&word(&[2, 2])).unwrap();
        assert_eq!(f22.linear, Mat2::new(-0.5, -0.25, 0.5, -0.25));
        let f1 = s.compose_word(&word(&[1])).unwrap();
        assert_eq!(&f1, &s.maps()[0]);
        let f12 = s.compose_word(&word(&[1, 2])).unwrap();
        assert_eq!(f12.linear, Mat2::new(-0.5, 0.25, -0.5, -0.25));
        assert!((f12.lipschitz() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn compose_word_rejects_bad_letter() {
        let s = bv();
        assert!(matches!(
            s.compose_word(&word(&[1, 3])),
            Err(IfsError::InvalidIndex { letter: 3, .. })
        ));
    }

    #[test]
    fn iterate_system_second() {
        let s = bv();
        let s2 = s.iterate_system(2).unwrap();
        assert_eq!(s2.len(), 4);
        for &p in s2.probs().unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let one = s.iterate_system(1).unwrap();
        assert_eq!(one, s);
    }

    #[test]
    fn iterate_system_final_example_lipschitz_list() {
        let s = final_example().system;
        let s2 = s.iterate_system(2).unwrap();
        let lips: Vec<f64> = s2.maps().iter().map(|m| m.lipschitz()).collect();
        let expected = [1.0, 0.5, 0.5, 1.0];
        for (a, b) in lips.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iterate_size_limit() {
        let s = bv();
        assert!(matches!(
            s.iterate_system(25),
            Err(IfsError::SizeLimit { .. })
        ));
    }

    #[test]
    fn average_contractivity_values() {
        let s = bv();
        let k1 = s.average_contractivity(1).unwrap();
        assert!((k1 - 1.1441228).abs() < 1e-6);
        assert!(k1 > 1.0);
        let k2 = s.average_contractivity(2).unwrap();
        assert!((k2 - constants::second_iterate_average()).abs() < 1e-12);
        let fe = final_example().system;
        assert!((fe.average_contractivity(2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn average_contractivity_needs_probs() {
        let s = IfsSystem::new(bv().maps().to_vec()).unwrap();
        assert!(matches!(
            s.average_contractivity(2),
            Err(IfsError::MissingProbabilities)
        ));
    }

    #[test]
    fn min_average_contractive_k_values() {
        let s = bv();
        assert_eq!(s.min_average_contractive_k(4).unwrap(), Some(2));
        let c = IfsSystem::with_probs(
            vec![crate::affine::AffineMap::new(
                Mat2::new(0.5, 0.0, 0.0, 0.5),
                Vec2::new(0.1, 0.1),
            )],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(c.min_average_contractive_k(2).unwrap(), Some(1));
        // p1 = 0.9 is outside the contractive-on-average regime for small k.
        let skew = barnsley_vince(0.9).unwrap().system;
        assert_eq!(skew.min_average_contractive_k(3).unwrap(), None);
    }

    #[test]
    fn find_contractive_word_examples() {
        let s = bv();
        let (w, lip) = s.find_contractive_word(2).unwrap();
        assert_eq!(w.letters(), &[2, 2]);
        assert!((lip - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-13);
        assert!(s.find_contractive_word(1).is_none());
        let c = IfsSystem::new(vec![crate::affine::AffineMap::new(
            Mat2::new(0.5, 0.0, 0.0, 0.5),
            Vec2::ZERO,
        )])
        .unwrap();
        let (w, _) = c.find_contractive_word(1).unwrap();
        assert_eq!(w.letters(), &[1]);
    }

    #[test]
    fn critical_probability_matches_closed_form() {
        let s = bv();
        let p = s.critical_probability(2).unwrap().unwrap();
        assert!((p - constants::critical_p1()).abs() < 1e-8, "{p}");
        // k = 1: both maps share the same norm, the average never dips below 1.
        assert_eq!(s.critical_probability(1).unwrap(), None);
        // Two identical contractions: contractive for every p1.
        let m = crate::affine::AffineMap::new(Mat2::new(0.5, 0.0, 0.0, 0.5), Vec2::ZERO);
        let twin = IfsSystem::with_probs(vec![m, m], vec![0.5, 0.5]).unwrap();
        assert_eq!(twin.critical_probability(1).unwrap(), None);
    }

    #[test]
    fn critical_probability_wrong_arity() {
        let m = crate::affine::AffineMap::IDENTITY;
        let s = IfsSystem::new(vec![m]).unwrap();
        assert!(matches!(
            s.critical_probability(2),
            Err(IfsError::WrongArity { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn invalid_probability_vectors_rejected() {
        let maps = bv().maps().to_vec();
        assert!(IfsSystem::with_probs(maps.clone(), vec![0.6, 0.6]).is_err());
        assert!(IfsSystem::with_probs(maps.clone(), vec![-0.1, 1.1]).is_err());
        assert!(IfsSystem::with_probs(maps, vec![1.0]).is_err());
    }

    prop_compose! {
        fn small_affine()(a in -0.9f64..0.9, b in -0.9f64..0.9,
                          c in -0.9f64..0.9, d in -0.9f64..0.9,
                          x in -1.0f64..1.0, y in -1.0f64..1.0)
                          -> crate::affine::AffineMap {
            crate::affine::AffineMap::new(Mat2::new(a, b, c, d), Vec2::new(x, y))
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn average_contractivity_submultiplicative(
            f in small_affine(), g in small_affine(), p in 0.05f64..0.95
        ) {
            let s = IfsSystem::with_probs(vec![f, g], vec![p, 1.0 - p]).unwrap();
            let a1 = s.average_contractivity(1).unwrap();
            let a2 = s.average_contractivity(2).unwrap();
            let a3 = s.average_contractivity(3).unwrap();
            prop_assert!(a2 <= a1 * a1 + 1e-10);
            prop_assert!(a3 <= a1 * a2 + 1e-10);
        }

        #[test]
        fn iterate_probabilities_sum_to_one(
            f in small_affine(), g in small_affine(), p in 0.05f64..0.95, k in 1u32..5
        ) {
            let s = IfsSystem::with_probs(vec![f, g], vec![p, 1.0 - p]).unwrap();
            let it = s.iterate_system(k).unwrap();
            let sum: f64 = it.probs().unwrap().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }

        #[test]
        fn lipschitz_submultiplicative(f in small_affine(), g in small_affine()) {
            let lhs = f.compose(&g).lipschitz();
            prop_assert!(lhs <= f.lipschitz() * g.lipschitz() + 1e-12);
        }

        #[test]
        fn determinant_multiplicative(f in small_affine(), g in small_affine()) {
            let lhs = f.compose(&g).linear.determinant();
            let rhs = f.linear.determinant() * g.linear.determinant();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn iterate_of_iterate_matches_product_length() {
        let s = bv();
        let a = s.iterate_system(2).unwrap().iterate_system(2).unwrap();
        let b = s.iterate_system(4).unwrap();
        // Same multiset of (map, probability) pairs; lexicographic order of
        // nested iteration coincides with direct length-4 enumeration.
        assert_eq!(a.len(), b.len());
        for (ma, mb) in a.maps().iter().zip(b.maps()) {
            assert!(ma.apply(Vec2::new(0.3, 0.4)).dist(mb.apply(Vec2::new(0.3, 0.4))) < 1e-12);
        }
        for (pa, pb) in a.probs().unwrap().iter().zip(b.probs().unwrap()) {
            assert!((pa - pb).abs() < 1e-15);
        }
    }
}
