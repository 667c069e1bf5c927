//! Fibre geometry of an invariant convex region: nested polygon images
//! under address prefixes, point/segment classification and the
//! singleton-fibre (strong-fibredness) report.

use crate::affine::Vec2;
use crate::ifs::{IfsError, IfsSystem, Word};
use crate::polygon::ConvexPolygon;
use serde::Serialize;
use thiserror::Error;

/// Default diameter below which a fibre approximation counts as a point.
pub const DEFAULT_POINT_TOL: f64 = 2e-6;

/// Default relative-area threshold (`area < tol * diameter^2`) below which a
/// flat fibre approximation counts as a segment.
pub const DEFAULT_COLLINEARITY_TOL: f64 = 1e-9;

/// Depth used when probing constant addresses in the fibred-structure report.
pub const REPORT_DEPTH: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FibreError {
    #[error("the polygon is not invariant under the system (some vertex image leaves it)")]
    NotInvariant,
    #[error("invalid address: {0}")]
    AddressParse(String),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// A symbolic address: a finite prefix optionally followed by a periodic
/// tail (so `2:2` denotes the constant address 2 repeated forever).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Address {
    prefix: Vec<u8>,
    periodic_tail: Option<Vec<u8>>,
}

impl Address {
    pub fn new(prefix: Vec<u8>, periodic_tail: Option<Vec<u8>>) -> Result<Self, FibreError> {
        if prefix.is_empty() && periodic_tail.as_ref().is_none_or(|t| t.is_empty()) {
            return Err(FibreError::AddressParse(
                "address needs at least one letter".into(),
            ));
        }
        if periodic_tail.as_ref().is_some_and(|t| t.is_empty()) {
            return Err(FibreError::AddressParse("periodic tail is empty".into()));
        }
        Ok(Address {
            prefix,
            periodic_tail,
        })
    }

    pub fn constant(letter: u8) -> Address {
        Address {
            prefix: vec![letter],
            periodic_tail: Some(vec![letter]),
        }
    }

    pub fn periodic(word: &Word) -> Address {
        Address {
            prefix: word.letters().to_vec(),
            periodic_tail: Some(word.letters().to_vec()),
        }
    }

    /// Parses `"1222"` (finite prefix) or `"prefix:tail"` with digits 1..9.
    pub fn parse(text: &str) -> Result<Address, FibreError> {
        let (prefix_str, tail_str) = match text.split_once(':') {
            Some((p, t)) => (p, Some(t)),
            None => (text, None),
        };
        let digits = |s: &str| -> Result<Vec<u8>, FibreError> {
            s.chars()
                .map(|c| match c {
                    '1'..='9' => Ok(c as u8 - b'0'),
                    _ => Err(FibreError::AddressParse(format!(
                        "unexpected character {c:?}, expected digits 1-9"
                    ))),
                })
                .collect()
        };
        Address::new(digits(prefix_str)?, tail_str.map(digits).transpose()?)
    }

    /// First `n` letters; the boolean is true when a finite address was
    /// truncated short of `n`.
    pub fn unroll(&self, n: u32) -> (Vec<u8>, bool) {
        let n = n as usize;
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(&self.prefix);
        match &self.periodic_tail {
            Some(tail) => {
                while out.len() < n {
                    out.extend_from_slice(tail);
                }
                out.truncate(n);
                (out, false)
            }
            None => {
                let truncated = out.len() < n;
                out.truncate(n);
                (out, truncated)
            }
        }
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in &self.prefix {
            write!(f, "{l}")?;
        }
        if let Some(tail) = &self.periodic_tail {
            write!(f, ":")?;
            for l in tail {
                write!(f, "{l}")?;
            }
        }
        Ok(())
    }
}

/// Depth-`n` outer approximation of a fibre: the image of the invariant
/// region under the first `n` letters of the address.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FibreApprox {
    pub depth: u32,
    pub polygon: ConvexPolygon,
    pub area: f64,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FibreClass {
    Point(Vec2),
    Segment(Vec2, Vec2),
    Undecided,
}

/// True iff every vertex image `f_i(v)` lies in `C` (within 1e-9), which by
/// convexity and affinity implies `f_i(C)` is a subset of `C` for every map.
pub fn check_invariant_polygon(s: &IfsSystem, region: &ConvexPolygon) -> bool {
    s.maps()
        .iter()
        .all(|f| region.vertices().iter().all(|&v| region.contains(f.apply(v), 1e-9)))
}

/// Nested images of `C` under the address prefixes of length `1..=n`
/// (possibly fewer when a finite address runs out).
pub fn fibre_sequence(
    s: &IfsSystem,
    region: &ConvexPolygon,
    address: &Address,
    n: u32,
) -> Result<Vec<FibreApprox>, FibreError> {
    assert!(n >= 1, "fibre sequence needs depth >= 1");
    if !check_invariant_polygon(s, region) {
        return Err(FibreError::NotInvariant);
    }
    let (letters, _truncated) = address.unroll(n);
    let mut out = Vec::with_capacity(letters.len());
    let mut composed = *s.map(letters[0])?;
    for (k, &l) in letters.iter().enumerate() {
        if k > 0 {
            composed = composed.compose(s.map(l)?);
        }
        let polygon = region.image(&composed);
        out.push(FibreApprox {
            depth: k as u32 + 1,
            area: polygon.area(),
            diameter: polygon.diameter(),
            polygon,
        });
    }
    Ok(out)
}

/// Classifies the deepest approximation: a point when its diameter is below
/// `point_tol`, a segment when it is flat (`area < collinearity_tol *
/// diameter^2`), otherwise undecided and the caller should deepen.
pub fn classify_fibre(
    seq: &[FibreApprox],
    point_tol: f64,
    collinearity_tol: f64,
) -> FibreClass {
    let Some(last) = seq.last() else {
        return FibreClass::Undecided;
    };
    if last.diameter < point_tol {
        return FibreClass::Point(last.polygon.centroid());
    }
    if last.area < collinearity_tol * last.diameter * last.diameter {
        let (a, b) = last.polygon.farthest_pair();
        return FibreClass::Segment(a, b);
    }
    FibreClass::Undecided
}

/// Singleton fibre exhibited by a contractive word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingletonWitness {
    pub word: String,
    pub address: String,
    pub lipschitz: f64,
    pub point: Vec2,
}

/// Outcome of probing the fibred structure of an invariant region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FibredStructureReport {
    /// Present when a contractive word certifies strong-fibredness; the
    /// periodic address of that word has a singleton fibre.
    pub strongly_fibred: Option<SingletonWitness>,
    /// Classification of each constant address at depth [`REPORT_DEPTH`].
    pub constant_fibres: Vec<(String, FibreClass)>,
    /// True when some tested fibre classified as a segment, ruling out
    /// point-fibredness.
    pub point_fibred_falsified: bool,
}

impl FibredStructureReport {
    pub fn is_inconclusive(&self) -> bool {
        self.strongly_fibred.is_none()
    }
}

/// Searches for a contractive word (singleton-fibre certificate of
/// strong-fibredness) and probes the constant addresses for segment fibres.
pub fn strongly_fibred_report(
    s: &IfsSystem,
    region: &ConvexPolygon,
    max_word_len: u32,
) -> Result<FibredStructureReport, FibreError> {
    if !check_invariant_polygon(s, region) {
        return Err(FibreError::NotInvariant);
    }
    let strongly_fibred = match s.find_contractive_word(max_word_len) {
        Some((word, lipschitz)) => {
            let map = s.compose_word(&word)?;
            let point = map
                .fixed_point()
                .expect("a contraction has a unique fixed point");
            Some(SingletonWitness {
                address: Address::periodic(&word).to_string(),
                word: word.to_string(),
                lipschitz,
                point,
            })
        }
        None => None,
    };
    let mut constant_fibres = Vec::new();
    let mut point_fibred_falsified = false;
    for letter in 1..=s.len() as u8 {
        let address = Address::constant(letter);
        let seq = fibre_sequence(s, region, &address, REPORT_DEPTH)?;
        let class = classify_fibre(&seq, DEFAULT_POINT_TOL, DEFAULT_COLLINEARITY_TOL);
        if matches!(class, FibreClass::Segment(..)) {
            point_fibred_falsified = true;
        }
        constant_fibres.push((address.to_string(), class));
    }
    Ok(FibredStructureReport {
        strongly_fibred,
        constant_fibres,
        point_fibred_falsified,
    })
}
