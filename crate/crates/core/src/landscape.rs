//! NK fitness landscapes.
//!
//! A landscape over `n` binary decisions where each decision contributes a
//! value that depends on its own state and on the states of `k` other
//! decisions. Fitness is the mean contribution. Landscapes are pure functions
//! of `(n, k, seed)` and are immutable once generated.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, RNG_ALGORITHM};

/// Largest `n` for which exhaustive enumeration is allowed.
pub const MAX_EXHAUSTIVE_N: usize = 20;

pub const FORMAT_NAME: &str = "alienlab-landscape";
pub const FORMAT_VERSION: u32 = 1;

/// Greek letter names used for decision positions.
pub const GREEK: [&str; 24] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda",
    "mu", "nu", "xi", "omicron", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega",
];

/// The first `n` Greek letter names.
pub fn symbol_names(n: usize) -> Vec<String> {
    GREEK.iter().take(n).map(|s| s.to_string()).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum LandscapeError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("capacity error: n = {n} exceeds the exhaustive bound of {max}")]
    Capacity { n: usize, max: usize },
    #[error("format error at line {line}, column {column}: {message}")]
    Format { line: usize, column: usize, message: String },
}

/// One art picture: the on/off state of every decision.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    bits: Vec<bool>,
}

impl Configuration {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    /// Decodes an enumeration index. Position 0 is the most significant bit,
    /// so the index ordering matches the lexicographic ordering of the
    /// bit string.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self { bits: (0..n).map(|i| (index >> (n - 1 - i)) & 1 == 1).collect() }
    }

    pub fn index(&self) -> usize {
        self.bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn random(n: usize, rng: &mut rng::Rng) -> Self {
        Self { bits: (0..n).map(|_| rng.gen::<bool>()).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = !bits[i];
        Self { bits }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({self})")
    }
}

impl FromStr for Configuration {
    type Err = LandscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(LandscapeError::Parameter(format!("invalid bit {other:?} in configuration {s:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Configuration::new)
    }
}

impl Serialize for Configuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of positions in which two configurations differ.
pub fn hamming(a: &Configuration, b: &Configuration) -> Result<usize, LandscapeError> {
    if a.len() != b.len() {
        return Err(LandscapeError::Parameter(format!(
            "hamming on configurations of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    n: usize,
    k: usize,
    seed: u64,
    neighbors: Vec<Vec<usize>>,
    contributions: Vec<Vec<f64>>,
    global_max_fitness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeStats {
    pub local_optima: Vec<(Configuration, f64)>,
    pub global_optimum: (Configuration, f64),
}

impl Landscape {
    /// Generates a random NK landscape.
    ///
    /// For each decision, `k` distinct other decisions are drawn uniformly
    /// without replacement and `2^(k+1)` contributions are drawn i.i.d. from
    /// `[0, 1)`. The global maximum is found by exhaustive enumeration.
    pub fn generate(n: usize, k: usize, seed: u64) -> Result<Self, LandscapeError> {
        if n == 0 {
            return Err(LandscapeError::Parameter("n must be positive".into()));
        }
        if k >= n {
            return Err(LandscapeError::Parameter(format!("k = {k} must lie in [0, {}]", n - 1)));
        }
        if n > MAX_EXHAUSTIVE_N {
            return Err(LandscapeError::Capacity { n, max: MAX_EXHAUSTIVE_N });
        }
        let mut rng = rng::seeded(seed);
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let mut pool: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            // partial Fisher-Yates: the first k slots become the sample
            for slot in 0..k {
                let pick = rng.gen_range(slot..pool.len());
                pool.swap(slot, pick);
            }
            pool.truncate(k);
            neighbors.push(pool);
        }
        let contributions = (0..n).map(|_| (0..1usize << (k + 1)).map(|_| rng.gen::<f64>()).collect()).collect();
        Self::from_parts(n, k, seed, neighbors, contributions)
    }

    /// Builds a landscape from explicit tables, validating every invariant.
    pub fn from_parts(
        n: usize,
        k: usize,
        seed: u64,
        neighbors: Vec<Vec<usize>>,
        contributions: Vec<Vec<f64>>,
    ) -> Result<Self, LandscapeError> {
        let bad = |m: String| Err(LandscapeError::Parameter(m));
        if n == 0 || k >= n {
            return bad(format!("invalid (n, k) = ({n}, {k})"));
        }
        if n > MAX_EXHAUSTIVE_N {
            return Err(LandscapeError::Capacity { n, max: MAX_EXHAUSTIVE_N });
        }
        if neighbors.len() != n || contributions.len() != n {
            return bad(format!("expected {n} neighbor lists and contribution tables"));
        }
        for (i, nb) in neighbors.iter().enumerate() {
            if nb.len() != k {
                return bad(format!("decision {i} has {} neighbors, expected {k}", nb.len()));
            }
            for (a, &j) in nb.iter().enumerate() {
                if j == i || j >= n || nb[..a].contains(&j) {
                    return bad(format!("decision {i} has invalid neighbor list {nb:?}"));
                }
            }
        }
        for (i, table) in contributions.iter().enumerate() {
            if table.len() != 1 << (k + 1) {
                return bad(format!("decision {i} has {} contributions, expected {}", table.len(), 1 << (k + 1)));
            }
            if let Some(v) = table.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return bad(format!("decision {i} has contribution {v} outside [0, 1)"));
            }
        }
        let mut landscape = Self { n, k, seed, neighbors, contributions, global_max_fitness: 0.0 };
        landscape.global_max_fitness = landscape.fitness_table().into_iter().fold(f64::MIN, f64::max);
        Ok(landscape)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn contributions(&self) -> &[Vec<f64>] {
        &self.contributions
    }

    pub fn global_max_fitness(&self) -> f64 {
        self.global_max_fitness
    }

    pub fn symbols(&self) -> Vec<String> {
        symbol_names(self.n)
    }

    fn contribution_index(&self, i: usize, bits: &[bool]) -> usize {
        self.neighbors[i].iter().fold(bits[i] as usize, |acc, &j| (acc << 1) | bits[j] as usize)
    }

    pub fn fitness(&self, c: &Configuration) -> Result<f64, LandscapeError> {
        if c.len() != self.n {
            return Err(LandscapeError::Parameter(format!(
                "configuration has length {}, landscape has n = {}",
                c.len(),
                self.n
            )));
        }
        let total: f64 = (0..self.n).map(|i| self.contributions[i][self.contribution_index(i, c.bits())]).sum();
        Ok(total / self.n as f64)
    }

    /// Display payoff: fitness scaled so that the global optimum scores 100.
    pub fn payoff_points(&self, c: &Configuration) -> Result<f64, LandscapeError> {
        let f = self.fitness(c)?;
        // pinned so the optimum scores exactly 100 despite rounding
        Ok(if f == self.global_max_fitness { 100.0 } else { 100.0 * f / self.global_max_fitness })
    }

    /// Fitness of every configuration, indexed by [`Configuration::index`].
    fn fitness_table(&self) -> Vec<f64> {
        (0..1usize << self.n)
            .map(|idx| {
                let c = Configuration::from_index(idx, self.n);
                let total: f64 = (0..self.n).map(|i| self.contributions[i][self.contribution_index(i, c.bits())]).sum();
                total / self.n as f64
            })
            .collect()
    }

    /// Scans all `2^n` configurations for strict local optima under
    /// single-bit flips.
    pub fn enumerate_optima(&self) -> Result<LandscapeStats, LandscapeError> {
        if self.n > MAX_EXHAUSTIVE_N {
            return Err(LandscapeError::Capacity { n: self.n, max: MAX_EXHAUSTIVE_N });
        }
        let table = self.fitness_table();
        let mut local_optima = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for (idx, &f) in table.iter().enumerate() {
            if best.map_or(true, |(_, b)| f > b) {
                best = Some((idx, f));
            }
            if (0..self.n).all(|bit| f > table[idx ^ (1 << bit)]) {
                local_optima.push((Configuration::from_index(idx, self.n), f));
            }
        }
        let (gidx, gf) = best.expect("table is non-empty");
        Ok(LandscapeStats { local_optima, global_optimum: (Configuration::from_index(gidx, self.n), gf) })
    }

    pub fn save(&self) -> Vec<u8> {
        let doc = LandscapeFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            rng: RNG_ALGORITHM.to_string(),
            n: self.n,
            k: self.k,
            seed: self.seed,
            global_max_fitness: self.global_max_fitness,
            neighbors: self.neighbors.clone(),
            contributions: self.contributions.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&doc).expect("landscape serializes");
        out.push(b'\n');
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self, LandscapeError> {
        let fmt_err = |e: serde_json::Error| LandscapeError::Format { line: e.line(), column: e.column(), message: e.to_string() };
        // Check the header before the full schema so that version mismatches
        // are reported as such rather than as a missing field.
        let header: serde_json::Value = serde_json::from_slice(bytes).map_err(fmt_err)?;
        let top = |message: String| LandscapeError::Format { line: 1, column: 1, message };
        if header.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
            return Err(top(format!("not a landscape document (expected format tag \"{FORMAT_NAME}\")")));
        }
        match header.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            other => {
                return Err(top(format!("unsupported version {other:?}, expected version {FORMAT_VERSION}")));
            }
        }
        let doc: LandscapeFile = serde_json::from_slice(bytes).map_err(fmt_err)?;
        if doc.rng != RNG_ALGORITHM {
            return Err(top(format!("rng algorithm {:?} differs from {RNG_ALGORITHM:?}", doc.rng)));
        }
        let landscape = Self::from_parts(doc.n, doc.k, doc.seed, doc.neighbors, doc.contributions)
            .map_err(|e| top(e.to_string()))?;
        if landscape.global_max_fitness != doc.global_max_fitness {
            return Err(top(format!(
                "stored global maximum {} does not match tables ({})",
                doc.global_max_fitness, landscape.global_max_fitness
            )));
        }
        Ok(landscape)
    }
}

#[derive(Serialize, Deserialize)]
struct LandscapeFile {
    format: String,
    version: u32,
    rng: String,
    n: usize,
    k: usize,
    seed: u64,
    global_max_fitness: f64,
    neighbors: Vec<Vec<usize>>,
    contributions: Vec<Vec<f64>>,
}
