//! Direct, bilaterally symmetric encoding of a 4×4×3 voxel body and the
//! laws that turn genes into per-voxel lengths at any instant.
//!
//! A gene holds a starting and a final resting length. Resting length moves
//! linearly between them over the robot's lifetime ("ballistic" development:
//! open loop, no feedback), and a global sinusoidal actuation signal is
//! added on top, attenuated for shrunken voxels.
//!
//! Voxel indexing: voxel `(x, y, z)` with `x, y ∈ 0..4`, `z ∈ 0..3` has flat
//! index `(z * 4 + y) * 4 + x`. Gene `k` controls the mirror pair on the
//! positive-x half, ordered row-major over `(y, z, x_half)`:
//! `k = (y * 3 + z) * 2 + (x - 2)` for `x ∈ {2, 3}`, and its mirror `3 - x`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::Error;

pub const MIN_LENGTH: f64 = 0.25;
pub const MAX_LENGTH: f64 = 1.75;

pub const GRID_X: usize = 4;
pub const GRID_Y: usize = 4;
pub const GRID_Z: usize = 3;
pub const NUM_VOXELS: usize = GRID_X * GRID_Y * GRID_Z;
pub const NUM_GENES: usize = NUM_VOXELS / 2;

/// Whether the body may change over its lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Fixed resting lengths (`s0 == s1` for every gene).
    Evo,
    /// Independent starting and final resting lengths.
    EvoDevo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Evo => "evo",
            Mode::EvoDevo => "evo-devo",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "evo" => Ok(Mode::Evo),
            "evo-devo" | "evodevo" | "evo_devo" => Ok(Mode::EvoDevo),
            other => Err(Error::Parse(format!("unknown mode `{other}` (expected evo or evo-devo)"))),
        }
    }
}

/// Starting (`s0`) and final (`s1`) resting length of one mirror pair of voxels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gene {
    pub s0: f64,
    pub s1: f64,
}

impl Gene {
    pub const UNIT: Gene = Gene { s0: 1.0, s1: 1.0 };

    pub fn new(s0: f64, s1: f64) -> Result<Self, Error> {
        check_length(s0)?;
        check_length(s1)?;
        Ok(Gene { s0, s1 })
    }

    /// A non-developing gene.
    pub fn fixed(s: f64) -> Result<Self, Error> {
        Gene::new(s, s)
    }

    pub fn is_inert(&self) -> bool {
        self.s0 == self.s1
    }

    /// Developmental window width of one voxel, `|s1 - s0|`.
    pub fn window(&self) -> f64 {
        (self.s1 - self.s0).abs()
    }
}

pub fn check_length(s: f64) -> Result<(), Error> {
    if s.is_finite() && (MIN_LENGTH..=MAX_LENGTH).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfBounds(format!(
            "resting length {s} outside [{MIN_LENGTH}, {MAX_LENGTH}]"
        )))
    }
}

pub fn clamp_length(s: f64) -> f64 {
    s.clamp(MIN_LENGTH, MAX_LENGTH)
}

/// Global actuation signal parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuationParams {
    /// Amplitude as a fraction of voxel length.
    pub amplitude: f64,
    /// Period in seconds.
    pub period: f64,
}

impl Default for ActuationParams {
    fn default() -> Self {
        ActuationParams { amplitude: 0.20, period: 0.25 }
    }
}

impl ActuationParams {
    pub fn new(amplitude: f64, period: f64) -> Result<Self, Error> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::Config(format!("actuation amplitude must be >= 0, got {amplitude}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("actuation period must be > 0, got {period}")));
        }
        Ok(ActuationParams { amplitude, period })
    }
}

/// Developmental resting length at time `t` of a lifetime lasting `tau`.
pub fn rest_length(gene: Gene, t: f64, tau: f64) -> Result<f64, Error> {
    if !(tau > 0.0) || !(0.0..=tau).contains(&t) {
        return Err(Error::OutOfBounds(format!("time {t} outside [0, {tau}]")));
    }
    Ok(rest_length_unchecked(gene, t / tau))
}

#[inline]
pub(crate) fn rest_length_unchecked(gene: Gene, frac: f64) -> f64 {
    // The end of life returns s1 exactly rather than up to rounding.
    if frac >= 1.0 {
        gene.s1
    } else {
        gene.s0 + frac * (gene.s1 - gene.s0)
    }
}

/// Attenuation of actuation for voxels shorter than unit length.
#[inline]
pub fn damping_factor(s: f64) -> f64 {
    if s >= 1.0 {
        1.0
    } else {
        (4.0 * s - 1.0) / 3.0
    }
}

#[inline]
pub fn actuation(t: f64, params: ActuationParams) -> f64 {
    params.amplitude * (2.0 * std::f64::consts::PI * t / params.period).sin()
}

/// Actuated length of a voxel; cubing gives its current volume.
pub fn current_length(gene: Gene, t: f64, tau: f64, params: ActuationParams) -> Result<f64, Error> {
    let r = rest_length(gene, t, tau)?;
    Ok(actuated(r, actuation(t, params)))
}

#[inline]
pub(crate) fn actuated(rest: f64, signal: f64) -> f64 {
    rest + signal * damping_factor(rest)
}

/// Flat voxel index of grid cell `(x, y, z)`.
#[inline]
pub fn voxel_index(x: usize, y: usize, z: usize) -> usize {
    (z * GRID_Y + y) * GRID_X + x
}

/// The two voxel indices (positive-x member first) controlled by gene `k`.
pub fn gene_voxels(k: usize) -> [usize; 2] {
    assert!(k < NUM_GENES, "gene index {k} out of range");
    let half = k % 2;
    let z = (k / 2) % GRID_Z;
    let y = k / (2 * GRID_Z);
    let x = GRID_X / 2 + half;
    [voxel_index(x, y, z), voxel_index(GRID_X - 1 - x, y, z)]
}

/// For each of the 48 voxels, the gene that controls it.
pub fn voxel_gene_map() -> [usize; NUM_VOXELS] {
    let mut map = [usize::MAX; NUM_VOXELS];
    for k in 0..NUM_GENES {
        for v in gene_voxels(k) {
            map[v] = k;
        }
    }
    map
}

/// A complete robot description: 24 genes plus the encoding mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    genes: [Gene; NUM_GENES],
    mode: Mode,
}

impl Genome {
    pub fn new(genes: [Gene; NUM_GENES], mode: Mode) -> Result<Self, Error> {
        for (k, g) in genes.iter().enumerate() {
            check_length(g.s0).map_err(|e| Error::OutOfBounds(format!("gene {k}: {e}")))?;
            check_length(g.s1).map_err(|e| Error::OutOfBounds(format!("gene {k}: {e}")))?;
            if mode == Mode::Evo && g.s0 != g.s1 {
                return Err(Error::InvalidGenome(format!(
                    "gene {k} develops ({} -> {}) in an evo genome",
                    g.s0, g.s1
                )));
            }
        }
        Ok(Genome { genes, mode })
    }

    pub fn from_vec(genes: Vec<Gene>, mode: Mode) -> Result<Self, Error> {
        let genes: [Gene; NUM_GENES] = genes.try_into().map_err(|v: Vec<Gene>| {
            Error::InvalidGenome(format!("expected {NUM_GENES} genes, got {}", v.len()))
        })?;
        Genome::new(genes, mode)
    }

    pub fn uniform(gene: Gene, mode: Mode) -> Result<Self, Error> {
        Genome::new([gene; NUM_GENES], mode)
    }

    pub fn genes(&self) -> &[Gene; NUM_GENES] {
        &self.genes
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// The same body, re-labelled as developing (`s1` already equals `s0`
    /// for evo genomes, so behaviour is unchanged).
    pub fn to_evo_devo(&self) -> Genome {
        Genome { genes: self.genes, mode: Mode::EvoDevo }
    }

    pub(crate) fn with_genes_unchecked(genes: [Gene; NUM_GENES], mode: Mode) -> Genome {
        debug_assert!(Genome::new(genes, mode).is_ok());
        Genome { genes, mode }
    }

    /// Per-voxel genes after mirroring across the x midplane.
    pub fn expand_symmetric(&self) -> [Gene; NUM_VOXELS] {
        let map = voxel_gene_map();
        std::array::from_fn(|v| self.genes[map[v]])
    }

    /// Per-voxel developmental resting lengths at fraction `frac` of the lifetime.
    pub fn rest_lengths_at(&self, frac: f64) -> [f64; NUM_VOXELS] {
        let per_gene: [f64; NUM_GENES] = std::array::from_fn(|k| rest_length_unchecked(self.genes[k], frac));
        let map = voxel_gene_map();
        std::array::from_fn(|v| per_gene[map[v]])
    }

    /// Per-voxel resting lengths at birth.
    pub fn initial_lengths(&self) -> [f64; NUM_VOXELS] {
        self.rest_lengths_at(0.0)
    }

    /// A genome whose development is frozen at lifetime fraction `frac`.
    pub fn frozen_at(&self, frac: f64) -> Genome {
        let genes = self.genes.map(|g| {
            let s = clamp_length(rest_length_unchecked(g, frac));
            Gene { s0: s, s1: s }
        });
        Genome { genes, mode: self.mode }
    }
}

/// Draw a genome with every gene endpoint uniform on the allowed range.
pub fn random_genome<R: Rng + ?Sized>(mode: Mode, rng: &mut R) -> Genome {
    let genes = std::array::from_fn(|_| {
        let s0 = rng.random_range(MIN_LENGTH..=MAX_LENGTH);
        let s1 = match mode {
            Mode::Evo => s0,
            Mode::EvoDevo => rng.random_range(MIN_LENGTH..=MAX_LENGTH),
        };
        Gene { s0, s1 }
    });
    Genome { genes, mode }
}

impl fmt::Display for Genome {
    /// `mode <mode>` header, then one `index s0 s1` line per gene with 17
    /// significant digits so the text round-trips exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode {}", self.mode)?;
        for (k, g) in self.genes.iter().enumerate() {
            writeln!(f, "{k} {:.16e} {:.16e}", g.s0, g.s1)?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut mode = None;
        let mut genes: [Option<Gene>; NUM_GENES] = [None; NUM_GENES];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse(format!("line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "mode" {
                if fields.len() != 2 {
                    return Err(bad("expected `mode <evo|evo-devo>`".into()));
                }
                mode = Some(fields[1].parse::<Mode>()?);
                continue;
            }
            if fields.len() != 3 {
                return Err(bad(format!("expected `index s0 s1`, got `{line}`")));
            }
            let k: usize = fields[0].parse().map_err(|_| bad(format!("bad gene index `{}`", fields[0])))?;
            let s0: f64 = fields[1].parse().map_err(|_| bad(format!("bad s0 `{}`", fields[1])))?;
            let s1: f64 = fields[2].parse().map_err(|_| bad(format!("bad s1 `{}`", fields[2])))?;
            if k >= NUM_GENES {
                return Err(bad(format!("gene index {k} out of range")));
            }
            if genes[k].replace(Gene { s0, s1 }).is_some() {
                return Err(bad(format!("gene {k} listed twice")));
            }
        }
        let mode = mode.ok_or_else(|| Error::Parse("missing `mode` header".into()))?;
        let mut out = [Gene::UNIT; NUM_GENES];
        for (k, g) in genes.iter().enumerate() {
            out[k] = g.ok_or_else(|| Error::Parse(format!("gene {k} missing")))?;
        }
        Genome::new(out, mode)
    }
}
