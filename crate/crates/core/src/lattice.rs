//! Domain types and the canonical enumeration of the two finite lattices.
//!
//! Both the latent type configurations and the observed data configurations
//! are 4-vectors of nonnegative counts summing to the sample size. They are
//! enumerated lexicographically in their first three coordinates; the
//! position in that order is the *rank*, which indexes every table in the
//! crate and every record of the on-disk cache.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest sample size supported by the numeric tables.
pub const MAX_SAMPLE_SIZE: u32 = 2000;

/// Number of individuals in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SampleSize(u32);

impl SampleSize {
    pub fn new(s: u32) -> Result<Self> {
        if s == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        if s > MAX_SAMPLE_SIZE {
            return Err(Error::ResourceCap(format!(
                "sample size {s} exceeds the table limit {MAX_SAMPLE_SIZE}"
            )));
        }
        Ok(SampleSize(s))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    /// Number of points on either lattice, `C(s+3, 3)`.
    pub fn lattice_len(self) -> usize {
        simplex_len(self.0)
    }
}

impl TryFrom<u32> for SampleSize {
    type Error = Error;
    fn try_from(s: u32) -> Result<Self> {
        SampleSize::new(s)
    }
}

impl From<SampleSize> for u32 {
    fn from(s: SampleSize) -> u32 {
        s.0
    }
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `C(s+3, 3)`: number of 4-compositions of `s` into nonnegative parts.
pub fn simplex_len(s: u32) -> usize {
    let s = s as usize;
    (s + 1) * (s + 2) * (s + 3) / 6
}

/// Number of points whose first coordinate is strictly below `x1`.
#[inline]
fn leading_block(s: u32, x1: u32) -> usize {
    simplex_len(s) - if x1 > s { 0 } else { simplex_len(s - x1) }
}

/// Rank of `(x1, x2, x3)` (with `x1 + x2 + x3 <= s`) in lexicographic order.
#[inline]
pub fn rank3(s: u32, x1: u32, x2: u32, x3: u32) -> usize {
    debug_assert!(x1 + x2 + x3 <= s);
    let rest = (s - x1) as usize;
    let x2 = x2 as usize;
    leading_block(s, x1) + x2 * (rest + 1) - x2 * x2.saturating_sub(1) / 2 + x3 as usize
}

/// Inverse of [`rank3`].
pub fn unrank3(s: u32, rank: usize) -> [u32; 3] {
    assert!(rank < simplex_len(s), "rank {rank} out of range for s={s}");
    // binary search on the first coordinate
    let (mut lo, mut hi) = (0u32, s);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if leading_block(s, mid) <= rank {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let x1 = lo;
    let mut r = rank - leading_block(s, x1);
    let rest = s - x1;
    let mut x2 = 0;
    loop {
        let row = (rest - x2 + 1) as usize;
        if r < row {
            break;
        }
        r -= row;
        x2 += 1;
    }
    [x1, x2, r as u32]
}

/// Latent counts of the four potential-outcome types.
///
/// Under a survival reading, defiers are the individuals the intervention
/// would kill and compliers those it would save.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeConfiguration {
    pub never: u32,
    pub defier: u32,
    pub complier: u32,
    pub always: u32,
}

impl TypeConfiguration {
    pub fn new(never: u32, defier: u32, complier: u32, always: u32) -> Self {
        TypeConfiguration { never, defier, complier, always }
    }

    /// Builds from the first three counts, deriving the always-taker count.
    pub fn from_leading(s: SampleSize, never: u32, defier: u32, complier: u32) -> Result<Self> {
        let used = never as u64 + defier as u64 + complier as u64;
        if used > s.get() as u64 {
            return Err(invalid(format!(
                "type counts ({never}, {defier}, {complier}) exceed s={s}"
            )));
        }
        Ok(TypeConfiguration::new(never, defier, complier, s.get() - used as u32))
    }

    pub fn from_counts(c: [u32; 4]) -> Self {
        TypeConfiguration::new(c[0], c[1], c[2], c[3])
    }

    pub fn counts(&self) -> [u32; 4] {
        [self.never, self.defier, self.complier, self.always]
    }

    pub fn total(&self) -> u32 {
        self.never + self.defier + self.complier + self.always
    }

    pub fn rank(&self) -> usize {
        rank3(self.total(), self.never, self.defier, self.complier)
    }

    pub fn from_rank(s: SampleSize, rank: usize) -> Self {
        let [a, b, c] = unrank3(s.get(), rank);
        TypeConfiguration::new(a, b, c, s.get() - a - b - c)
    }
}

impl fmt::Display for TypeConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.never, self.defier, self.complier, self.always)
    }
}

/// Observed 2x2 cross-tabulation of arm by binary outcome.
///
/// `g[0]`: treated in the intervention arm, `g[1]`: untreated in the
/// intervention arm, `g[2]`: treated in control, `g[3]`: untreated in control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct DataConfiguration {
    g: [u32; 4],
}

impl DataConfiguration {
    pub fn new(g1: u32, g2: u32, g3: u32, g4: u32) -> Self {
        DataConfiguration { g: [g1, g2, g3, g4] }
    }

    pub fn from_leading(s: SampleSize, g1: u32, g2: u32, g3: u32) -> Result<Self> {
        let used = g1 as u64 + g2 as u64 + g3 as u64;
        if used > s.get() as u64 {
            return Err(invalid(format!("data counts ({g1}, {g2}, {g3}) exceed s={s}")));
        }
        Ok(DataConfiguration::new(g1, g2, g3, s.get() - used as u32))
    }

    pub fn counts(&self) -> [u32; 4] {
        self.g
    }

    #[inline]
    pub fn g1(&self) -> u32 {
        self.g[0]
    }
    #[inline]
    pub fn g2(&self) -> u32 {
        self.g[1]
    }
    #[inline]
    pub fn g3(&self) -> u32 {
        self.g[2]
    }
    #[inline]
    pub fn g4(&self) -> u32 {
        self.g[3]
    }

    pub fn total(&self) -> u32 {
        self.g.iter().sum()
    }

    /// Size of the intervention arm.
    pub fn intervention_size(&self) -> u32 {
        self.g[0] + self.g[1]
    }

    pub fn control_size(&self) -> u32 {
        self.g[2] + self.g[3]
    }

    pub fn rank(&self) -> usize {
        rank3(self.total(), self.g[0], self.g[1], self.g[2])
    }

    pub fn from_rank(s: SampleSize, rank: usize) -> Self {
        let [a, b, c] = unrank3(s.get(), rank);
        DataConfiguration::new(a, b, c, s.get() - a - b - c)
    }

    /// The same trial with the arms exchanged.
    pub fn swap_arms(&self) -> Self {
        DataConfiguration::new(self.g[2], self.g[3], self.g[0], self.g[1])
    }
}

impl TryFrom<Vec<u32>> for DataConfiguration {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        match v.as_slice() {
            &[a, b, c, d] => Ok(DataConfiguration::new(a, b, c, d)),
            _ => Err(invalid(format!("data configuration needs 4 counts, got {}", v.len()))),
        }
    }
}

impl From<DataConfiguration> for Vec<u32> {
    fn from(g: DataConfiguration) -> Vec<u32> {
        g.g.to_vec()
    }
}

impl FromStr for DataConfiguration {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let parts = text
            .split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| invalid(format!("bad count {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        DataConfiguration::try_from(parts)
    }
}

impl fmt::Display for DataConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.g;
        write!(f, "({a},{b},{c},{d})")
    }
}

/// Numbers of each type assigned to the intervention arm.
///
/// Only four of the eight type-by-arm cells are free; the named cells are the
/// never-takers (`n12`), defiers (`n22`), compliers (`n31`) and always-takers
/// (`n41`) drawn into intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArmSplit {
    pub n12: i64,
    pub n22: i64,
    pub n31: i64,
    pub n41: i64,
}

impl ArmSplit {
    /// The split implied by the data when `ell` never-takers are in intervention.
    pub fn for_index(theta: &TypeConfiguration, g: &DataConfiguration, ell: i64) -> Self {
        let s = theta.total() as i64;
        let [t1, _, t3, _] = theta.counts().map(i64::from);
        let [g1, g2, g3, _] = g.counts().map(i64::from);
        ArmSplit {
            n12: ell,
            n22: g2 - ell,
            n31: t1 + t3 + g1 + g2 + g3 - s - ell,
            n41: s + ell - t1 - t3 - g2 - g3,
        }
    }

    pub fn within(&self, theta: &TypeConfiguration) -> bool {
        let c = theta.counts().map(i64::from);
        [self.n12, self.n22, self.n31, self.n41]
            .iter()
            .zip(c.iter())
            .all(|(n, t)| (0..=*t).contains(n))
    }

    pub fn intervention_size(&self) -> i64 {
        self.n12 + self.n22 + self.n31 + self.n41
    }
}

/// Declared mechanism assigning individuals to the intervention arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RandomizationSpec {
    /// Independent coin flips with success probability `p`.
    Iid { p: Ratio<u64> },
    /// Exactly `m` of the `s` individuals drawn into intervention.
    Urn { m: u32 },
}

impl RandomizationSpec {
    pub fn iid(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(invalid(format!("IID probability must lie in (0,1), got {num}/{den}")));
        }
        Ok(RandomizationSpec::Iid { p: Ratio::new(num, den) })
    }

    pub fn urn(m: u32) -> Self {
        RandomizationSpec::Urn { m }
    }

    /// Checks the parameter constraints that depend on the sample size.
    pub fn validate(&self, s: SampleSize) -> Result<()> {
        match *self {
            RandomizationSpec::Iid { p } => {
                if *p.numer() == 0 || p.numer() >= p.denom() {
                    return Err(invalid(format!("IID probability must lie in (0,1), got {p}")));
                }
            }
            RandomizationSpec::Urn { m } => {
                if m == 0 || m >= s.get() {
                    return Err(invalid(format!(
                        "urn draw m={m} must satisfy 1 <= m <= s-1 (s={s})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether `g` can occur under this mechanism at all.
    pub fn admits(&self, g: &DataConfiguration) -> bool {
        match *self {
            RandomizationSpec::Iid { .. } => true,
            RandomizationSpec::Urn { m } => g.intervention_size() == m,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RandomizationSpec::Iid { .. } => "iid",
            RandomizationSpec::Urn { .. } => "urn",
        }
    }
}

impl fmt::Display for RandomizationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RandomizationSpec::Iid { p } => write!(f, "iid:p={}/{}", p.numer(), p.denom()),
            RandomizationSpec::Urn { m } => write!(f, "urn:m={m}"),
        }
    }
}

fn parse_probability(text: &str) -> Result<Ratio<u64>> {
    let text = text.trim();
    let bad = || invalid(format!("cannot parse probability {text:?}"));
    if let Some((n, d)) = text.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    // decimal such as 0.5 or 0.25
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let den = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
    let g = num.gcd(&den).max(1);
    Ok(Ratio::new(num / g, den / g))
}

impl FromStr for RandomizationSpec {
    type Err = Error;

    /// Accepts `iid:p=1/2`, `iid:p=0.5`, `urn:m=50`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let (key, value) = rest.split_once('=').unwrap_or(("", rest));
        match (kind.trim().to_ascii_lowercase().as_str(), key.trim()) {
            ("iid", "p") | ("iid", "") => {
                let p = parse_probability(value)?;
                RandomizationSpec::iid(*p.numer(), *p.denom())
            }
            ("urn", "m") | ("urn", "") => {
                let m = value
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("cannot parse urn size {value:?}")))?;
                Ok(RandomizationSpec::urn(m))
            }
            _ => Err(invalid(format!("unknown randomization spec {text:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Text(String),
    Object {
        #[serde(alias = "type")]
        kind: String,
        #[serde(default)]
        p: Option<serde_json::Value>,
        #[serde(default)]
        m: Option<u32>,
    },
}

impl Serialize for RandomizationSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RandomizationSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let parsed = match SpecRepr::deserialize(de)? {
            SpecRepr::Text(t) => t.parse(),
            SpecRepr::Object { kind, p, m } => match (kind.to_ascii_lowercase().as_str(), p, m) {
                ("iid", Some(p), _) => {
                    let text = match p {
                        serde_json::Value::String(s) => s,
                        other => other.to_string(),
                    };
                    format!("iid:p={text}").parse()
                }
                ("urn", _, Some(m)) => Ok(RandomizationSpec::urn(m)),
                (k, _, _) => Err(invalid(format!("incomplete randomization spec of kind {k:?}"))),
            },
        };
        parsed.map_err(D::Error::custom)
    }
}

/// Lexicographic stream over one lattice; cheap to re-create per thread.
#[derive(Debug, Clone)]
pub struct LatticeIter {
    s: u32,
    next: Option<[u32; 3]>,
}

impl LatticeIter {
    pub fn new(s: SampleSize) -> Self {
        LatticeIter { s: s.get(), next: Some([0, 0, 0]) }
    }
}

impl Iterator for LatticeIter {
    type Item = [u32; 4];

    fn next(&mut self) -> Option<[u32; 4]> {
        let cur = self.next?;
        let [a, b, c] = cur;
        let s = self.s;
        self.next = if a + b + c < s {
            Some([a, b, c + 1])
        } else if a + b < s {
            Some([a, b + 1, 0])
        } else if a < s {
            Some([a + 1, 0, 0])
        } else {
            None
        };
        Some([a, b, c, s - a - b - c])
    }
}

/// Every type configuration for sample size `s`, in canonical order.
pub fn enumerate_type_configs(s: SampleSize) -> impl Iterator<Item = TypeConfiguration> {
    LatticeIter::new(s).map(TypeConfiguration::from_counts)
}

/// Every data configuration for sample size `s`, in canonical order.
pub fn enumerate_data_configs(s: SampleSize) -> impl Iterator<Item = DataConfiguration> {
    LatticeIter::new(s).map(|[a, b, c, d]| DataConfiguration::new(a, b, c, d))
}
