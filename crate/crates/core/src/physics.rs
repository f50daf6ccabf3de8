//! Corner-node mass–spring lattice for a 4×4×3 block of soft voxels.
//!
//! Point masses sit on the 5×5×4 grid of voxel corners and are shared by
//! neighbouring voxels. Every voxel edge, both diagonals of every voxel face
//! and the four body diagonals carry a spring, which makes each voxel a
//! rigid-in-shape box whose size follows its current length. A spring shared
//! by several voxels aims for the mean of their lengths (face diagonals
//! scaled by √2, body diagonals by √3).
//!
//! Units: lengths in voxel lengths, masses normalised so a unit voxel weighs
//! 1 (each node carries 48/100). Gravity is configured in m/s² and converted
//! through `voxel_size`.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::genome::{self, ActuationParams, GRID_X, GRID_Y, GRID_Z, MAX_LENGTH, MIN_LENGTH, NUM_VOXELS};
use crate::Error;

pub const NODES_X: usize = GRID_X + 1;
pub const NODES_Y: usize = GRID_Y + 1;
pub const NODES_Z: usize = GRID_Z + 1;
pub const NUM_NODES: usize = NODES_X * NODES_Y * NODES_Z;

/// Mass of one lattice node; the 100 nodes together weigh as much as 48 unit voxels.
pub const NODE_MASS: f64 = NUM_VOXELS as f64 / NUM_NODES as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics timestep (s).
    pub dt: f64,
    /// Lifetime of one evaluation (s).
    pub eval_duration: f64,
    /// Actuation amplitude as a fraction of length.
    pub actuation_amplitude: f64,
    /// Actuation period (s).
    pub actuation_period: f64,
    /// Fitness samples per second.
    pub sample_rate: f64,
    /// Gravitational acceleration along z (m/s²).
    pub gravity: f64,
    /// Physical size of one voxel length (m).
    pub voxel_size: f64,
    /// Spring constant of lattice springs.
    pub stiffness: f64,
    /// Damping of lattice springs as a fraction of critical.
    pub damping_ratio: f64,
    /// Ground penalty spring constant.
    pub contact_stiffness: f64,
    pub contact_damping_ratio: f64,
    /// Coulomb coefficient (static and kinetic).
    pub ground_friction: f64,
    /// How far (voxel lengths) the top layer must sink below the bottom layer to count as rolled over.
    pub rollover_margin: f64,
    /// Node speed (voxel lengths/s) treated as numerical blowup.
    pub max_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 5e-4,
            eval_duration: 8.0,
            actuation_amplitude: 0.20,
            actuation_period: 0.25,
            sample_rate: 100.0,
            gravity: -9.81,
            voxel_size: 0.01,
            stiffness: 2.0e4,
            damping_ratio: 0.2,
            contact_stiffness: 4.0e4,
            contact_damping_ratio: 1.0,
            ground_friction: 1.0,
            rollover_margin: 0.1,
            max_speed: 1.0e3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("dt", self.dt),
            ("eval_duration", self.eval_duration),
            ("actuation_period", self.actuation_period),
            ("sample_rate", self.sample_rate),
            ("voxel_size", self.voxel_size),
            ("stiffness", self.stiffness),
            ("contact_stiffness", self.contact_stiffness),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("sim.{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("damping_ratio", self.damping_ratio),
            ("contact_damping_ratio", self.contact_damping_ratio),
            ("ground_friction", self.ground_friction),
            ("rollover_margin", self.rollover_margin),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("sim.{name} must be >= 0, got {v}")));
            }
        }
        if !self.gravity.is_finite() {
            return Err(Error::Config("sim.gravity must be finite".into()));
        }
        if !(0.0..=0.2).contains(&self.actuation_amplitude) {
            return Err(Error::Config(format!(
                "sim.actuation_amplitude must lie in [0, 0.2], got {}",
                self.actuation_amplitude
            )));
        }
        self.steps_per_sample()?;
        let samples = self.eval_duration * self.sample_rate;
        if (samples - samples.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sim.eval_duration * sim.sample_rate must be whole, got {samples}"
            )));
        }
        Ok(())
    }

    /// Physics steps between fitness samples; errors unless `dt` divides the interval.
    pub fn steps_per_sample(&self) -> Result<u64, Error> {
        let ratio = 1.0 / (self.sample_rate * self.dt);
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps {
            return Err(Error::Config(format!(
                "sim.dt = {} does not divide the sampling interval 1/{}",
                self.dt, self.sample_rate
            )));
        }
        Ok(steps as u64)
    }

    pub fn actuation(&self) -> ActuationParams {
        ActuationParams { amplitude: self.actuation_amplitude, period: self.actuation_period }
    }

    /// Gravity in voxel lengths per s².
    pub fn gravity_accel(&self) -> f64 {
        self.gravity / self.voxel_size
    }

    /// Rough upper bound on a stable timestep for symplectic Euler on this
    /// lattice: `2 / ω_max`, with `ω_max` bounded through the densest node
    /// (26 springs) plus ground contact.
    pub fn stable_dt_bound(&self) -> f64 {
        let k_node = 4.0 * 26.0 * self.stiffness + 2.0 * self.contact_stiffness;
        2.0 / (k_node / NODE_MASS).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeNode {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelElement {
    /// Corner nodes; bit 0/1/2 of the slot index selects +x/+y/+z.
    pub node_indices: [usize; 8],
    pub current_rest_length: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("numerical blowup at t = {time:.4} s: node {node} speed {speed:.3e} exceeds {limit:.3e} (dt too large?)")]
    Blowup { time: f64, node: usize, speed: f64, limit: f64 },
    #[error("step called on a terminated simulation")]
    Terminated,
    #[error(transparent)]
    Input(#[from] Error),
}

/// Slot used to pad spring voxel lists; its length is always zero.
const NO_VOXEL: usize = NUM_VOXELS;

#[derive(Clone, Copy, Debug)]
struct Spring {
    a: usize,
    b: usize,
    /// Adjacent voxels, padded with `NO_VOXEL`.
    voxels: [usize; 4],
    count: usize,
    /// Target length = weight * sum of the adjacent voxel lengths.
    weight: f64,
}

/// One contribution to a node's force: `sign * force[spring]`, optionally
/// paired with the mirror spring so the x components cancel exactly.
#[derive(Clone, Copy, Debug)]
struct Term {
    spring: usize,
    sign: f64,
    pair: Option<(usize, f64)>,
}

struct Topology {
    springs: Vec<Spring>,
    /// Per node, the spring terms in an order that mirrors across x = 0.
    gather: Vec<Vec<Term>>,
    voxel_nodes: [[usize; 8]; NUM_VOXELS],
    bottom: Vec<usize>,
    top: Vec<usize>,
}

#[inline]
pub fn node_index(i: usize, j: usize, k: usize) -> usize {
    (k * NODES_Y + j) * NODES_X + i
}

/// The node reflected through the x midplane.
#[inline]
fn mirror_node(n: usize) -> usize {
    let i = n % NODES_X;
    n - i + (NODES_X - 1 - i)
}

static TOPOLOGY: LazyLock<Topology> = LazyLock::new(build_topology);

fn build_topology() -> Topology {
    let mut voxel_nodes = [[0usize; 8]; NUM_VOXELS];
    for z in 0..GRID_Z {
        for y in 0..GRID_Y {
            for x in 0..GRID_X {
                let v = genome::voxel_index(x, y, z);
                for c in 0..8 {
                    voxel_nodes[v][c] = node_index(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                }
            }
        }
    }

    // Each unordered node pair becomes one spring; voxels that own that pair
    // as an edge or face diagonal contribute to its target.
    let mut springs: Vec<Spring> = Vec::new();
    let mut lookup = std::collections::BTreeMap::<(usize, usize), usize>::new();
    let mut add = |a: usize, b: usize, v: usize, scale: f64, springs: &mut Vec<Spring>| {
        let key = (a.min(b), a.max(b));
        let idx = *lookup.entry(key).or_insert_with(|| {
            springs.push(Spring { a: key.0, b: key.1, voxels: [NO_VOXEL; 4], count: 0, weight: scale });
            springs.len() - 1
        });
        let s = &mut springs[idx];
        s.voxels[s.count] = v;
        s.count += 1;
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    for v in 0..NUM_VOXELS {
        let n = voxel_nodes[v];
        for c in 0..8 {
            for bit in 0..3 {
                if c & (1 << bit) == 0 {
                    add(n[c], n[c | (1 << bit)], v, 1.0, &mut springs);
                }
            }
        }
        // Face diagonals: for each axis-aligned face, the two corner pairs
        // differing in both in-plane bits.
        for normal in 0..3 {
            let (p, q) = match normal {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for side in 0..2 {
                let base = side << normal;
                let c00 = base;
                let c11 = base | (1 << p) | (1 << q);
                let c10 = base | (1 << p);
                let c01 = base | (1 << q);
                add(n[c00], n[c11], v, sqrt2, &mut springs);
                add(n[c10], n[c01], v, sqrt2, &mut springs);
            }
        }
        for c in 0..4 {
            add(n[c], n[7 - c], v, 3f64.sqrt(), &mut springs);
        }
    }
    // Mirror springs must see their voxel lengths in the same order, so
    // their targets round identically.
    let mirror_key = |v: usize| {
        if v == NO_VOXEL {
            return (usize::MAX, 0, 0);
        }
        let (x, y, z) = (v % GRID_X, (v / GRID_X) % GRID_Y, v / (GRID_X * GRID_Y));
        (x.min(GRID_X - 1 - x), y, z)
    };
    for s in &mut springs {
        s.weight /= s.count as f64;
        s.voxels.sort_by_key(|&v| mirror_key(v));
    }

    let mirror_spring: Vec<usize> = springs
        .iter()
        .map(|s| {
            let (a, b) = (mirror_node(s.a), mirror_node(s.b));
            lookup[&(a.min(b), a.max(b))]
        })
        .collect();
    let mut incident = vec![Vec::new(); NUM_NODES];
    for (idx, s) in springs.iter().enumerate() {
        incident[s.a].push((idx, 1.0));
        incident[s.b].push((idx, -1.0));
    }
    let mut gather: Vec<Vec<Term>> = vec![Vec::new(); NUM_NODES];
    for n in 0..NUM_NODES {
        let m = mirror_node(n);
        if m > n {
            gather[n] = incident[n].iter().map(|&(spring, sign)| Term { spring, sign, pair: None }).collect();
            gather[m] = incident[n]
                .iter()
                .map(|&(spring, _)| {
                    let ms = mirror_spring[spring];
                    let sign = if springs[ms].a == m { 1.0 } else { -1.0 };
                    Term { spring: ms, sign, pair: None }
                })
                .collect();
        } else if m == n {
            let mut seen = vec![false; springs.len()];
            for &(spring, sign) in &incident[n] {
                if seen[spring] {
                    continue;
                }
                let ms = mirror_spring[spring];
                seen[spring] = true;
                seen[ms] = true;
                let pair = (ms != spring).then(|| (ms, if springs[ms].a == n { 1.0 } else { -1.0 }));
                gather[n].push(Term { spring, sign, pair });
            }
        }
    }

    let layer = |k: usize| -> Vec<usize> {
        let mut out = Vec::with_capacity(NODES_X * NODES_Y);
        for j in 0..NODES_Y {
            for i in 0..NODES_X {
                out.push(node_index(i, j, k));
            }
        }
        out
    };
    Topology { springs, gather, voxel_nodes, bottom: layer(0), top: layer(NODES_Z - 1) }
}

const RELAX_TOLERANCE: f64 = 1e-10;
const RELAX_MAX_ITERS: usize = 20_000;

/// Heavy-ball gradient descent on the energy of unit-stiffness springs at
/// their target lengths. Returns the number of iterations used.
fn relax(pos: &mut [[f64; 3]; NUM_NODES], lengths: &[f64; NUM_VOXELS + 1]) -> usize {
    let topo = &*TOPOLOGY;
    let targets: Vec<f64> = topo
        .springs
        .iter()
        .map(|s| s.weight * s.voxels.iter().map(|&v| lengths[v]).sum::<f64>())
        .collect();
    // Step below 1/λ_max of the stiffness matrix (node degree ≤ 26).
    let step = 1.0 / (2.0 * 26.0);
    let momentum = 0.9;
    let mut prev = *pos;
    for iter in 0..RELAX_MAX_ITERS {
        let mut grad = [[0.0; 3]; NUM_NODES];
        for (s, &target) in topo.springs.iter().zip(&targets) {
            let d = sub(pos[s.b], pos[s.a]);
            let len = dot(d, d).sqrt();
            let f = scale(d, (len - target) / len);
            for a in 0..3 {
                grad[s.a][a] -= f[a];
                grad[s.b][a] += f[a];
            }
        }
        let worst = grad.iter().map(|g| dot(*g, *g)).fold(0.0, f64::max);
        if worst.sqrt() < RELAX_TOLERANCE {
            return iter;
        }
        for i in 0..NUM_NODES {
            let current = pos[i];
            for a in 0..3 {
                pos[i][a] += momentum * (current[a] - prev[i][a]) - step * grad[i][a];
            }
            prev[i] = current;
        }
    }
    RELAX_MAX_ITERS
}

/// Number of springs in the lattice.
pub fn spring_count() -> usize {
    TOPOLOGY.springs.len()
}

fn check_lengths(lengths: &[f64]) -> Result<(), Error> {
    if lengths.len() != NUM_VOXELS {
        return Err(Error::InvalidGenome(format!(
            "expected {NUM_VOXELS} voxel lengths, got {}",
            lengths.len()
        )));
    }
    for (v, &s) in lengths.iter().enumerate() {
        if !(s.is_finite() && (MIN_LENGTH..=MAX_LENGTH).contains(&s)) {
            return Err(Error::OutOfBounds(format!(
                "voxel {v}: rest length {s} outside [{MIN_LENGTH}, {MAX_LENGTH}]"
            )));
        }
    }
    Ok(())
}

/// Positions, velocities and contact state of one robot.
#[derive(Clone, Debug)]
pub struct PhysicsState {
    nodes: Vec<LatticeNode>,
    voxels: Vec<VoxelElement>,
    /// Static-friction anchor of each node currently touching the ground.
    anchors: Vec<Option<[f64; 2]>>,
    steps: u64,
    dt: f64,
    terminated_rollover: bool,
    forces: Vec<[f64; 3]>,
    targets: Vec<f64>,
    /// Force each spring applies to its `a` node.
    spring_forces: Vec<[f64; 3]>,
}

impl PartialEq for PhysicsState {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.voxels == other.voxels
            && self.anchors == other.anchors
            && self.steps == other.steps
            && self.dt == other.dt
            && self.terminated_rollover == other.terminated_rollover
    }
}

/// Build an upright lattice at rest on the ground.
///
/// Grid lines start out spaced by the mean length of the voxel slab between
/// them; the lattice is then relaxed (no gravity) to a minimum of spring
/// energy, so neighbouring voxels of very different sizes do not start under
/// large stress. The body is centred on the x and y axes with its lowest
/// nodes at z = 0.
pub fn build_lattice(rest_lengths: &[f64], config: &SimConfig) -> Result<PhysicsState, Error> {
    check_lengths(rest_lengths)?;
    config.validate()?;
    let topo = &*TOPOLOGY;

    let slab_mean = |axis: usize, idx: usize| -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for z in 0..GRID_Z {
            for y in 0..GRID_Y {
                for x in 0..GRID_X {
                    if [x, y, z][axis] == idx {
                        sum += rest_lengths[genome::voxel_index(x, y, z)];
                        n += 1;
                    }
                }
            }
        }
        sum / n as f64
    };
    let coords = |axis: usize, cells: usize| -> Vec<f64> {
        let mut c = vec![0.0; cells + 1];
        for i in 0..cells {
            c[i + 1] = c[i] + slab_mean(axis, i);
        }
        c
    };
    let mut xs = coords(0, GRID_X);
    let mut ys = coords(1, GRID_Y);
    let zs = coords(2, GRID_Z);
    let xmid = 0.5 * xs[GRID_X];
    let ymid = 0.5 * ys[GRID_Y];
    xs.iter_mut().for_each(|x| *x -= xmid);
    ys.iter_mut().for_each(|y| *y -= ymid);

    let mut pos = [[0.0; 3]; NUM_NODES];
    for k in 0..NODES_Z {
        for j in 0..NODES_Y {
            for i in 0..NODES_X {
                pos[node_index(i, j, k)] = [xs[i], ys[j], zs[k]];
            }
        }
    }
    let mut lengths = [0.0; NUM_VOXELS + 1];
    lengths[..NUM_VOXELS].copy_from_slice(rest_lengths);
    relax(&mut pos, &lengths);

    // Make the mirror symmetry exact, centred on x = 0.
    for n in 0..NUM_NODES {
        let m = mirror_node(n);
        if m < n {
            continue;
        }
        let (p, q) = (pos[n], pos[m]);
        let x = if m == n { 0.0 } else { 0.5 * (p[0] - q[0]) };
        let y = 0.5 * (p[1] + q[1]);
        let z = 0.5 * (p[2] + q[2]);
        pos[n] = [x, y, z];
        pos[m] = [-x, y, z];
    }

    // Centre on the y axis and drop onto the ground plane.
    let cy = pos.iter().map(|p| p[1]).sum::<f64>() / NUM_NODES as f64;
    let min_z = pos.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
    let nodes = pos
        .iter()
        .map(|p| LatticeNode { position: [p[0], p[1] - cy, p[2] - min_z], velocity: [0.0; 3], mass: NODE_MASS })
        .collect();
    let voxels = (0..NUM_VOXELS)
        .map(|v| VoxelElement { node_indices: topo.voxel_nodes[v], current_rest_length: rest_lengths[v] })
        .collect();

    Ok(PhysicsState {
        nodes,
        voxels,
        anchors: vec![None; NUM_NODES],
        steps: 0,
        dt: config.dt,
        terminated_rollover: false,
        forces: vec![[0.0; 3]; NUM_NODES],
        targets: vec![0.0; topo.springs.len()],
        spring_forces: vec![[0.0; 3]; topo.springs.len()],
    })
}

impl PhysicsState {
    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn voxels(&self) -> &[VoxelElement] {
        &self.voxels
    }

    /// Seconds since birth.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn terminated_rollover(&self) -> bool {
        self.terminated_rollover
    }

    /// Mark the simulation as rolled over; further steps are refused.
    pub fn set_terminated_rollover(&mut self) {
        self.terminated_rollover = true;
    }

    pub fn in_contact(&self, node: usize) -> bool {
        self.anchors[node].is_some()
    }

    /// Rigidly move every node (testing and scenario construction).
    pub fn translate(&mut self, delta: [f64; 3]) {
        for n in &mut self.nodes {
            for a in 0..3 {
                n.position[a] += delta[a];
            }
        }
        self.anchors.iter_mut().for_each(|a| *a = None);
    }

    /// Replace node positions wholesale (testing and scenario construction).
    pub fn set_positions(&mut self, positions: &[[f64; 3]]) {
        assert_eq!(positions.len(), self.nodes.len());
        for (n, p) in self.nodes.iter_mut().zip(positions) {
            n.position = *p;
        }
        self.anchors.iter_mut().for_each(|a| *a = None);
    }

    pub fn set_velocities(&mut self, velocities: &[[f64; 3]]) {
        assert_eq!(velocities.len(), self.nodes.len());
        for (n, v) in self.nodes.iter_mut().zip(velocities) {
            n.velocity = *v;
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.nodes.iter().map(|n| 0.5 * n.mass * dot(n.velocity, n.velocity)).sum()
    }

    /// Mass-weighted mean position.
    pub fn center_of_mass(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut m = 0.0;
        for n in &self.nodes {
            for a in 0..3 {
                acc[a] += n.mass * n.position[a];
            }
            m += n.mass;
        }
        acc.map(|c| c / m)
    }

    pub fn center_of_mass_velocity(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut m = 0.0;
        for n in &self.nodes {
            for a in 0..3 {
                acc[a] += n.mass * n.velocity[a];
            }
            m += n.mass;
        }
        acc.map(|c| c / m)
    }

    /// Advance by one timestep. `rest_lengths` are the developmental resting
    /// lengths at the current time; global actuation is applied on top.
    pub fn step(&mut self, rest_lengths: &[f64], config: &SimConfig) -> Result<(), PhysicsError> {
        if self.terminated_rollover {
            return Err(PhysicsError::Terminated);
        }
        check_lengths(rest_lengths)?;
        let topo = &*TOPOLOGY;
        let t = self.time();
        let signal = genome::actuation(t, config.actuation());

        let mut lengths = [0.0; NUM_VOXELS + 1];
        for (v, vox) in self.voxels.iter_mut().enumerate() {
            vox.current_rest_length = rest_lengths[v];
            lengths[v] = genome::actuated(rest_lengths[v], signal);
        }
        for (target, s) in self.targets.iter_mut().zip(&topo.springs) {
            let [v0, v1, v2, v3] = s.voxels;
            *target = s.weight * ((lengths[v0] + lengths[v1]) + (lengths[v2] + lengths[v3]));
        }

        let g = config.gravity_accel();
        for (f, n) in self.forces.iter_mut().zip(&self.nodes) {
            *f = [0.0, 0.0, n.mass * g];
        }

        let k = config.stiffness;
        let c = config.damping_ratio * 2.0 * (k * NODE_MASS).sqrt();
        let mut pos = [[0.0; 3]; NUM_NODES];
        let mut vel = [[0.0; 3]; NUM_NODES];
        for (i, n) in self.nodes.iter().enumerate() {
            pos[i] = n.position;
            vel[i] = n.velocity;
        }
        for ((s, &target), out) in topo.springs.iter().zip(&self.targets).zip(self.spring_forces.iter_mut()) {
            let (a, b) = (s.a, s.b);
            let d = sub(pos[b], pos[a]);
            let len2 = dot(d, d);
            if len2 <= 0.0 {
                *out = [0.0; 3];
                continue;
            }
            let len = len2.sqrt();
            let inv = 1.0 / len;
            let rel = sub(vel[b], vel[a]);
            let mag = (k * (len - target) + c * dot(rel, d) * inv) * inv;
            *out = scale(d, mag);
        }
        let sf = &self.spring_forces;
        for (f, terms) in self.forces.iter_mut().zip(&topo.gather) {
            for t in terms {
                let mut g = scale(sf[t.spring], t.sign);
                if let Some((ms, sign)) = t.pair {
                    let h = scale(sf[ms], sign);
                    g = [g[0] + h[0], g[1] + h[1], g[2] + h[2]];
                }
                f[0] += g[0];
                f[1] += g[1];
                f[2] += g[2];
            }
        }

        let kc = config.contact_stiffness;
        let cc = config.contact_damping_ratio * 2.0 * (kc * NODE_MASS).sqrt();
        let mu = config.ground_friction;
        for ((n, f), anchor) in self.nodes.iter().zip(self.forces.iter_mut()).zip(self.anchors.iter_mut()) {
            let [x, y, z] = n.position;
            if z >= 0.0 {
                *anchor = None;
                continue;
            }
            let normal = (-kc * z - cc * n.velocity[2]).max(0.0);
            f[2] += normal;
            // Stick spring towards the anchor, saturating at the Coulomb limit
            // and dragging the anchor along while sliding.
            let a = anchor.get_or_insert([x, y]);
            let mut ft = [
                -kc * (x - a[0]) - cc * n.velocity[0],
                -kc * (y - a[1]) - cc * n.velocity[1],
            ];
            let mag = (ft[0] * ft[0] + ft[1] * ft[1]).sqrt();
            let limit = mu * normal;
            if mag > limit {
                let s = if mag > 0.0 { limit / mag } else { 0.0 };
                ft = [ft[0] * s, ft[1] * s];
                *a = [x + ft[0] / kc, y + ft[1] / kc];
            }
            f[0] += ft[0];
            f[1] += ft[1];
        }

        let dt = self.dt;
        let limit2 = config.max_speed * config.max_speed;
        for (i, (n, f)) in self.nodes.iter_mut().zip(&self.forces).enumerate() {
            let inv_m = 1.0 / n.mass;
            for a in 0..3 {
                n.velocity[a] += f[a] * inv_m * dt;
            }
            let speed2 = dot(n.velocity, n.velocity);
            if !(speed2 <= limit2) {
                return Err(PhysicsError::Blowup {
                    time: t,
                    node: i,
                    speed: speed2.sqrt(),
                    limit: config.max_speed,
                });
            }
            for a in 0..3 {
                n.position[a] += n.velocity[a] * dt;
            }
        }
        self.steps += 1;
        Ok(())
    }

    /// Evaluate the rollover predicate and latch it into the state.
    pub fn update_rollover(&mut self, config: &SimConfig) -> bool {
        if check_rollover(self, config) {
            self.terminated_rollover = true;
        }
        self.terminated_rollover
    }
}

/// Mass-weighted mean y coordinate.
pub fn center_of_mass_y(state: &PhysicsState) -> f64 {
    let mut acc = 0.0;
    let mut m = 0.0;
    for n in &state.nodes {
        acc += n.mass * n.position[1];
        m += n.mass;
    }
    acc / m
}

/// True when the top face has sunk below the bottom face by at least the margin.
pub fn check_rollover(state: &PhysicsState, config: &SimConfig) -> bool {
    let topo = &*TOPOLOGY;
    let mean_z = |ids: &[usize]| ids.iter().map(|&i| state.nodes[i].position[2]).sum::<f64>() / ids.len() as f64;
    mean_z(&topo.top) <= mean_z(&topo.bottom) - config.rollover_margin
}

/// Indices of the nodes on the bottom and top faces at birth.
pub fn layer_nodes() -> (&'static [usize], &'static [usize]) {
    (&TOPOLOGY.bottom, &TOPOLOGY.top)
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(s: f64) -> Vec<f64> {
        vec![s; NUM_VOXELS]
    }

    #[test]
    fn topology_counts() {
        // 235 unique edges, two diagonals on each of 184 unique faces and
        // four body diagonals per voxel.
        assert_eq!(spring_count(), 235 + 2 * 184 + 4 * 48);
        assert_eq!(TOPOLOGY.bottom.len(), 25);
        assert_eq!(TOPOLOGY.top.len(), 25);
    }

    #[test]
    fn unit_lattice_geometry() {
        let cfg = SimConfig::default();
        let s = build_lattice(&uniform(1.0), &cfg).unwrap();
        assert_eq!(s.nodes().len(), 100);
        assert_eq!(s.voxels().len(), 48);
        let min_z = s.nodes().iter().map(|n| n.position[2]).fold(f64::INFINITY, f64::min);
        let max_z = s.nodes().iter().map(|n| n.position[2]).fold(f64::NEG_INFINITY, f64::max);
        let max_x = s.nodes().iter().map(|n| n.position[0]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min_z, 0.0);
        assert_eq!(max_z, 3.0);
        assert_eq!(max_x, 2.0);
        assert!(s.nodes().iter().all(|n| n.velocity == [0.0; 3]));
        assert_eq!(s.time(), 0.0);
    }

    #[test]
    fn scaled_lattice_geometry() {
        let s = build_lattice(&uniform(1.75), &SimConfig::default()).unwrap();
        assert_eq!(s.nodes().len(), 100);
        let max_z = s.nodes().iter().map(|n| n.position[2]).fold(f64::NEG_INFINITY, f64::max);
        assert!((max_z - 5.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lengths() {
        let cfg = SimConfig::default();
        let mut l = uniform(1.0);
        l[5] = 0.2;
        assert!(build_lattice(&l, &cfg).is_err());
        assert!(build_lattice(&uniform(1.0)[..47], &cfg).is_err());
    }

    #[test]
    fn com_y_symmetry_and_translation() {
        let cfg = SimConfig::default();
        let mut s = build_lattice(&uniform(1.0), &cfg).unwrap();
        assert!(center_of_mass_y(&s).abs() < 1e-15);
        s.translate([0.0, 2.5, 0.0]);
        assert!((center_of_mass_y(&s) - 2.5).abs() < 1e-12);
        let mirrored: Vec<[f64; 3]> = s.nodes().iter().map(|n| [n.position[0], -n.position[1], n.position[2]]).collect();
        let before = center_of_mass_y(&s);
        s.set_positions(&mirrored);
        assert!((center_of_mass_y(&s) + before).abs() < 1e-12);
    }

    #[test]
    fn ground_pushes_penetrating_node_up() {
        let cfg = SimConfig::default();
        let mut s = build_lattice(&uniform(1.0), &cfg).unwrap();
        let mut pos: Vec<[f64; 3]> = s.nodes().iter().map(|n| n.position).collect();
        pos[0][2] = -0.05;
        s.set_positions(&pos);
        let vz_before = s.nodes()[0].velocity[2];
        s.step(&uniform(1.0), &cfg).unwrap();
        assert!(s.nodes()[0].velocity[2] > vz_before);
        assert!(s.in_contact(0));
    }

    #[test]
    fn rollover_predicate() {
        let cfg = SimConfig::default();
        let mut s = build_lattice(&uniform(1.0), &cfg).unwrap();
        assert!(!check_rollover(&s, &cfg));
        // swap the z of top and bottom faces
        let mut pos: Vec<[f64; 3]> = s.nodes().iter().map(|n| n.position).collect();
        let (bottom, top) = layer_nodes();
        for (&b, &t) in bottom.iter().zip(top) {
            let zb = pos[b][2];
            pos[b][2] = pos[t][2];
            pos[t][2] = zb;
        }
        s.set_positions(&pos);
        assert!(check_rollover(&s, &cfg));
        assert!(s.update_rollover(&cfg));
        assert!(matches!(s.step(&uniform(1.0), &cfg), Err(PhysicsError::Terminated)));
    }

    #[test]
    fn step_advances_time_by_dt() {
        let cfg = SimConfig::default();
        let mut s = build_lattice(&uniform(1.0), &cfg).unwrap();
        for _ in 0..10 {
            s.step(&uniform(1.0), &cfg).unwrap();
        }
        assert_eq!(s.steps_taken(), 10);
        assert!((s.time() - 10.0 * cfg.dt).abs() < 1e-18);
    }

    #[test]
    fn oversized_timestep_is_reported_as_blowup() {
        let cfg = SimConfig { dt: 0.01, sample_rate: 100.0, ..SimConfig::default() };
        let mut s = build_lattice(&uniform(1.0), &cfg).unwrap();
        let mut l = uniform(1.75);
        l[0] = 0.25;
        let mut err = None;
        for _ in 0..10_000 {
            if let Err(e) = s.step(&l, &cfg) {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(PhysicsError::Blowup { .. })), "{err:?}");
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { dt: 3e-3, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { actuation_amplitude: 0.3, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { actuation_period: 0.0, ..SimConfig::default() }.validate().is_err());
        assert_eq!(SimConfig::default().steps_per_sample().unwrap(), 20);
        assert!(SimConfig::default().dt < SimConfig::default().stable_dt_bound());
    }
}
