//! Monte Carlo Pauli-frame simulation with state-dependent check-qubit noise.
//!
//! Frames are tracked relative to a noiseless reference in which every check
//! reads 0, so a check's frame bit is also its physical level before readout.
//! Check qubits can additionally be leaked: a leaked check reads 1, ignores
//! CNOT propagation, kicks independent X/Z backaction onto its data partners,
//! and returns to level 1 at readout with the seepage probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{
    build_cycle, repeat_window, CheckType, CircuitError, GateKind, LayerKind, Protocol, QubitLayout, ScheduleSpec,
    WindowCircuit,
};
use crate::code::CssCode;
use crate::gf2::BitVec;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("{name} = {value} is not a probability")]
    NotProbability { name: &'static str, value: f64 },
    #[error("readout bias {p_bias} exceeds the mean readout error {p_read}")]
    BiasTooLarge { p_read: f64, p_bias: f64 },
    #[error("unknown noise parameter `{0}`")]
    UnknownParameter(String),
}

/// Per-gate-application error probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Mean readout error `(p(0|1) + p(1|0)) / 2`.
    pub p_read: f64,
    /// Readout bias `(p(0|1) - p(1|0)) / 2`.
    pub p_bias: f64,
    pub p_prep: f64,
    pub p_id_s: f64,
    pub p_cnot: f64,
    pub p_id_l: f64,
    pub p_leak: f64,
    pub p_seep: f64,
    pub p_flip: f64,
    pub p_back: f64,
    pub p_corr: f64,
}

impl NoiseParams {
    pub const NAMES: [&'static str; 11] = [
        "p_read", "p_bias", "p_prep", "p_id_s", "p_cnot", "p_id_l", "p_leak", "p_seep", "p_flip", "p_back", "p_corr",
    ];

    pub const fn zero() -> Self {
        Self {
            p_read: 0.0,
            p_bias: 0.0,
            p_prep: 0.0,
            p_id_s: 0.0,
            p_cnot: 0.0,
            p_id_l: 0.0,
            p_leak: 0.0,
            p_seep: 0.0,
            p_flip: 0.0,
            p_back: 0.0,
            p_corr: 0.0,
        }
    }

    /// Gate and readout rates shared by all experiments: prep, short idle and
    /// CNOT at 1e-3, readout 0.02 with bias 0.005, long idle 0.005.
    pub const fn reference() -> Self {
        Self {
            p_read: 0.02,
            p_bias: 0.005,
            p_prep: 0.001,
            p_id_s: 0.001,
            p_cnot: 0.001,
            p_id_l: 0.005,
            ..Self::zero()
        }
    }

    /// Uniform circuit noise `p` on prep, idles, CNOTs and (unbiased) readout.
    pub const fn uniform(p: f64) -> Self {
        Self {
            p_read: p,
            p_prep: p,
            p_id_s: p,
            p_cnot: p,
            p_id_l: p,
            ..Self::zero()
        }
    }

    pub fn p_0_given_1(&self) -> f64 {
        self.p_read + self.p_bias
    }

    pub fn p_1_given_0(&self) -> f64 {
        self.p_read - self.p_bias
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "p_read" => self.p_read,
            "p_bias" => self.p_bias,
            "p_prep" => self.p_prep,
            "p_id_s" => self.p_id_s,
            "p_cnot" => self.p_cnot,
            "p_id_l" => self.p_id_l,
            "p_leak" => self.p_leak,
            "p_seep" => self.p_seep,
            "p_flip" => self.p_flip,
            "p_back" => self.p_back,
            "p_corr" => self.p_corr,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), NoiseError> {
        let slot = match name {
            "p_read" => &mut self.p_read,
            "p_bias" => &mut self.p_bias,
            "p_prep" => &mut self.p_prep,
            "p_id_s" => &mut self.p_id_s,
            "p_cnot" => &mut self.p_cnot,
            "p_id_l" => &mut self.p_id_l,
            "p_leak" => &mut self.p_leak,
            "p_seep" => &mut self.p_seep,
            "p_flip" => &mut self.p_flip,
            "p_back" => &mut self.p_back,
            "p_corr" => &mut self.p_corr,
            other => return Err(NoiseError::UnknownParameter(other.to_string())),
        };
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        for name in Self::NAMES {
            let value = self.get(name).unwrap_or_default();
            let ok = if name == "p_bias" {
                value.is_finite()
            } else {
                (0.0..=1.0).contains(&value)
            };
            if !ok {
                return Err(NoiseError::NotProbability { name, value });
            }
        }
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.p_bias.abs() > self.p_read || !in_unit(self.p_0_given_1()) || !in_unit(self.p_1_given_0()) {
            return Err(NoiseError::BiasTooLarge {
                p_read: self.p_read,
                p_bias: self.p_bias,
            });
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Single-qubit Pauli; bit 0 is the X component, bit 1 the Z component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    #[inline]
    pub fn from_index(i: usize) -> Pauli {
        [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][i & 3]
    }

    #[inline]
    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    #[inline]
    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }

    /// The 15 non-identity two-qubit Paulis.
    pub fn two_qubit_non_identity() -> impl Iterator<Item = [Pauli; 2]> {
        (1..16).map(|i| [Pauli::from_index(i / 4), Pauli::from_index(i % 4)])
    }
}

/// Position of a gate in a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GateSite {
    pub cycle: usize,
    pub layer: usize,
    pub index: usize,
}

/// What a single fault does right after its gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaultAction {
    /// Paulis on the gate's qubits (`[control, target]` for CNOTs, first slot otherwise).
    Pauli([Pauli; 2]),
    /// Flips the check's outcome-carrying bit (prep, conditional flip) or the
    /// reported classification (readout).
    Flip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InjectedFault {
    pub site: GateSite,
    pub action: FaultAction,
}

/// Per-shot RNG seed: SplitMix64 finalizer applied to `base ^ (index · φ64)`,
/// with φ64 = 0x9E3779B97F4A7C15. Shots are independent of execution order.
pub fn shot_seed(base_seed: u64, shot_index: u64) -> u64 {
    let mut z = base_seed ^ shot_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckLevel {
    Ground,
    Excited,
    Leaked,
}

#[derive(Clone, Debug)]
pub struct SimState {
    layout: QubitLayout,
    /// X/Z frame bits over data qubits then check qubits.
    pub x_frame: Vec<u8>,
    pub z_frame: Vec<u8>,
    /// Per check slot (X-checks first).
    pub leaked: Vec<bool>,
    pub cond_bit: Vec<u8>,
    pub readout_err: Vec<bool>,
    pub cycle_index: usize,
    initial_x: BitVec,
    initial_z: BitVec,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn layout(&self) -> QubitLayout {
        self.layout
    }

    #[inline]
    fn outcome_bit(&self, slot: usize) -> u8 {
        let q = self.layout.n_data + slot;
        match self.layout.check_type(slot) {
            CheckType::X => self.z_frame[q],
            CheckType::Z => self.x_frame[q],
        }
    }

    #[inline]
    fn toggle_outcome_bit(&mut self, slot: usize) {
        let q = self.layout.n_data + slot;
        match self.layout.check_type(slot) {
            CheckType::X => self.z_frame[q] ^= 1,
            CheckType::Z => self.x_frame[q] ^= 1,
        }
    }

    pub fn check_level(&self, slot: usize) -> CheckLevel {
        if self.leaked[slot] {
            CheckLevel::Leaked
        } else if self.outcome_bit(slot) == 1 {
            CheckLevel::Excited
        } else {
            CheckLevel::Ground
        }
    }

    fn data_frames(&self) -> (BitVec, BitVec) {
        let n = self.layout.n_data;
        let pick = |f: &[u8]| BitVec::from_support(n, (0..n).filter(|&q| f[q] == 1));
        (pick(&self.x_frame), pick(&self.z_frame))
    }
}

/// Fresh shot state: uniformly random data frames, each check independently
/// leaked with probability `initial_leak_fraction`, and every check's flip
/// condition set to the ideal syndrome of the sampled frame.
pub fn init_state(code: &CssCode, seed: u64, initial_leak_fraction: f64) -> SimState {
    assert!(
        (0.0..=1.0).contains(&initial_leak_fraction),
        "initial leak fraction must be a probability"
    );
    let layout = QubitLayout::for_code(code);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_q = layout.n_qubits();
    let mut x_frame = vec![0u8; n_q];
    let mut z_frame = vec![0u8; n_q];
    for b in &mut x_frame[..layout.n_data] {
        *b = rng.gen::<bool>() as u8;
    }
    for b in &mut z_frame[..layout.n_data] {
        *b = rng.gen::<bool>() as u8;
    }
    let leaked: Vec<bool> = (0..layout.n_checks())
        .map(|_| initial_leak_fraction > 0.0 && rng.gen::<f64>() < initial_leak_fraction)
        .collect();
    let mut state = SimState {
        layout,
        x_frame,
        z_frame,
        leaked,
        cond_bit: vec![0; layout.n_checks()],
        readout_err: vec![false; layout.n_checks()],
        cycle_index: 0,
        initial_x: BitVec::zeros(0),
        initial_z: BitVec::zeros(0),
        rng,
    };
    let (ix, iz) = state.data_frames();
    let sx = code.hx.mul_vec(&iz);
    let sz = code.hz.mul_vec(&ix);
    for i in 0..layout.n_x_checks {
        state.cond_bit[i] = sx.get(i) as u8;
    }
    for i in 0..layout.n_z_checks {
        state.cond_bit[layout.n_x_checks + i] = sz.get(i) as u8;
    }
    state.initial_x = ix;
    state.initial_z = iz;
    state
}

impl SimState {
    /// Replaces the data frames (e.g. to inject a deterministic initial error),
    /// recomputing the flip conditions from the new ideal syndrome.
    pub fn set_data_frames(&mut self, code: &CssCode, x: &BitVec, z: &BitVec) {
        let n = self.layout.n_data;
        for q in 0..n {
            self.x_frame[q] = x.get(q) as u8;
            self.z_frame[q] = z.get(q) as u8;
        }
        let sx = code.hx.mul_vec(z);
        let sz = code.hz.mul_vec(x);
        let nx = self.layout.n_x_checks;
        for i in 0..nx {
            self.cond_bit[i] = sx.get(i) as u8;
        }
        for i in 0..self.layout.n_z_checks {
            self.cond_bit[nx + i] = sz.get(i) as u8;
        }
        self.initial_x = x.clone();
        self.initial_z = z.clone();
    }
}

/// Check-level counts just before readout, per check type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelCounts {
    pub ground: usize,
    pub excited: usize,
    pub leaked: usize,
}

impl LevelCounts {
    pub fn total(&self) -> usize {
        self.ground + self.excited + self.leaked
    }

    pub fn add(&mut self, other: &LevelCounts) {
        self.ground += other.ground;
        self.excited += other.excited;
        self.leaked += other.leaked;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CyclePopulation {
    pub x: LevelCounts,
    pub z: LevelCounts,
}

impl CyclePopulation {
    pub fn combined(&self) -> LevelCounts {
        let mut c = self.x;
        c.add(&self.z);
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotRecord {
    pub protocol: Protocol,
    /// Per cycle, over check slots (X-checks first).
    pub raw_syndromes: Vec<BitVec>,
    pub reported_syndromes: Vec<BitVec>,
    pub initial_x: BitVec,
    pub initial_z: BitVec,
    pub final_x: BitVec,
    pub final_z: BitVec,
    pub populations: Vec<CyclePopulation>,
    pub leak_events: Vec<usize>,
}

struct Runner<'a> {
    params: &'a NoiseParams,
    protocol: Protocol,
    layout: QubitLayout,
}

impl Runner<'_> {
    #[inline]
    fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
        p > 0.0 && rng.gen::<f64>() < p
    }

    #[inline]
    fn apply_pauli(st: &mut SimState, q: usize, p: Pauli) {
        st.x_frame[q] ^= p.has_x() as u8;
        st.z_frame[q] ^= p.has_z() as u8;
    }

    fn prep(&self, st: &mut SimState, slot: usize) {
        let q = self.layout.n_data + slot;
        if !st.leaked[slot] {
            st.x_frame[q] = 0;
            st.z_frame[q] = 0;
            if Self::coin(&mut st.rng, self.params.p_prep) {
                st.toggle_outcome_bit(slot);
            }
            if st.readout_err[slot] && Self::coin(&mut st.rng, self.params.p_corr) {
                st.toggle_outcome_bit(slot);
            }
        }
        st.readout_err[slot] = false;
    }

    fn cnot(&self, st: &mut SimState, control: usize, target: usize) {
        let (check, data) = if self.layout.is_data(control) { (target, control) } else { (control, target) };
        let slot = check - self.layout.n_data;
        if st.leaked[slot] {
            let p = self.params.p_back;
            if Self::coin(&mut st.rng, p) {
                st.z_frame[data] ^= 1;
            }
            if Self::coin(&mut st.rng, p) {
                st.x_frame[data] ^= 1;
            }
            return;
        }
        st.x_frame[target] ^= st.x_frame[control];
        st.z_frame[control] ^= st.z_frame[target];
        if Self::coin(&mut st.rng, self.params.p_cnot) {
            let i = st.rng.gen_range(1..16usize);
            Self::apply_pauli(st, control, Pauli::from_index(i / 4));
            Self::apply_pauli(st, target, Pauli::from_index(i % 4));
        }
    }

    fn idle(st: &mut SimState, q: usize, p: f64) {
        if Self::coin(&mut st.rng, p) {
            let i = st.rng.gen_range(1..4usize);
            Self::apply_pauli(st, q, Pauli::from_index(i));
        }
    }

    fn cond_flip(&self, st: &mut SimState, slot: usize) {
        if st.leaked[slot] {
            return;
        }
        if st.cond_bit[slot] == 1 {
            st.toggle_outcome_bit(slot);
        }
        if Self::coin(&mut st.rng, self.params.p_flip) {
            st.toggle_outcome_bit(slot);
        }
    }

    /// Returns `(raw, leaked_now)`.
    fn measure(&self, st: &mut SimState, slot: usize, forced_flip: bool) -> (u8, bool) {
        let q = self.layout.n_data + slot;
        let raw;
        let mut leaked_now = false;
        if st.leaked[slot] {
            raw = 1;
            if Self::coin(&mut st.rng, self.params.p_seep) {
                // back in level 1; the next prep resets it
                st.leaked[slot] = false;
            }
        } else {
            let v = st.outcome_bit(slot);
            if v == 1 && Self::coin(&mut st.rng, self.params.p_leak) {
                st.leaked[slot] = true;
                st.x_frame[q] = 0;
                st.z_frame[q] = 0;
                leaked_now = true;
                raw = 1;
            } else {
                let p_err = if v == 1 { self.params.p_0_given_1() } else { self.params.p_1_given_0() };
                let e = Self::coin(&mut st.rng, p_err);
                st.readout_err[slot] = e;
                raw = v ^ e as u8;
            }
        }
        (raw ^ forced_flip as u8, leaked_now)
    }
}

pub fn run_shot(window: &WindowCircuit, params: &NoiseParams, state: SimState) -> ShotRecord {
    run_shot_with_fault(window, params, state, None)
}

/// Executes the window on `state`. `fault`, if given, is applied right after
/// its gate on top of the sampled noise.
pub fn run_shot_with_fault(
    window: &WindowCircuit,
    params: &NoiseParams,
    mut state: SimState,
    fault: Option<&InjectedFault>,
) -> ShotRecord {
    let layout = window.layout();
    assert_eq!(layout, state.layout, "state was initialized for a different code");
    let protocol = window.protocol();
    let runner = Runner {
        params,
        protocol,
        layout,
    };
    let n_checks = layout.n_checks();
    let mut record = ShotRecord {
        protocol,
        raw_syndromes: Vec::with_capacity(window.n_cycles),
        reported_syndromes: Vec::with_capacity(window.n_cycles),
        initial_x: state.initial_x.clone(),
        initial_z: state.initial_z.clone(),
        final_x: BitVec::zeros(0),
        final_z: BitVec::zeros(0),
        populations: Vec::with_capacity(window.n_cycles),
        leak_events: Vec::with_capacity(window.n_cycles),
    };

    for cycle in 0..window.n_cycles {
        state.cycle_index = cycle;
        let mut raw = BitVec::zeros(n_checks);
        let mut reported = BitVec::zeros(n_checks);
        let mut leaks = 0;
        for (li, layer) in window.cycle.layers.iter().enumerate() {
            let injected = fault.filter(|f| f.site.cycle == cycle && f.site.layer == li);
            if layer.kind == LayerKind::Measure {
                let mut pop = CyclePopulation::default();
                for slot in 0..n_checks {
                    let counts = match layout.check_type(slot) {
                        CheckType::X => &mut pop.x,
                        CheckType::Z => &mut pop.z,
                    };
                    match state.check_level(slot) {
                        CheckLevel::Ground => counts.ground += 1,
                        CheckLevel::Excited => counts.excited += 1,
                        CheckLevel::Leaked => counts.leaked += 1,
                    }
                }
                record.populations.push(pop);
            }
            for (gi, gate) in layer.gates.iter().enumerate() {
                let hit = injected.filter(|f| f.site.index == gi).map(|f| f.action);
                let [a, b] = gate.qubits;
                match gate.kind {
                    GateKind::PrepCheck => runner.prep(&mut state, a - layout.n_data),
                    GateKind::Cnot => runner.cnot(&mut state, a, b),
                    GateKind::IdleShort => Runner::idle(&mut state, a, params.p_id_s),
                    GateKind::IdleLong => Runner::idle(&mut state, a, params.p_id_l),
                    GateKind::CondFlip => runner.cond_flip(&mut state, a - layout.n_data),
                    GateKind::MeasureCheck => {
                        let slot = a - layout.n_data;
                        let (r, leaked_now) = runner.measure(&mut state, slot, hit == Some(FaultAction::Flip));
                        leaks += leaked_now as usize;
                        let rep = match runner.protocol {
                            Protocol::Flip => r ^ state.cond_bit[slot],
                            Protocol::Plain => r,
                        };
                        state.cond_bit[slot] = rep;
                        raw.set(slot, r == 1);
                        reported.set(slot, rep == 1);
                        continue;
                    }
                }
                match hit {
                    Some(FaultAction::Pauli(ps)) => {
                        Runner::apply_pauli(&mut state, a, ps[0]);
                        if gate.kind == GateKind::Cnot {
                            Runner::apply_pauli(&mut state, b, ps[1]);
                        }
                    }
                    Some(FaultAction::Flip) => state.toggle_outcome_bit(a - layout.n_data),
                    None => {}
                }
            }
        }
        record.raw_syndromes.push(raw);
        record.reported_syndromes.push(reported);
        record.leak_events.push(leaks);
    }
    let (fx, fz) = state.data_frames();
    record.final_x = fx;
    record.final_z = fz;
    record
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LevelFractions {
    pub ground: f64,
    pub excited: f64,
    pub leaked: f64,
}

impl From<LevelCounts> for LevelFractions {
    fn from(c: LevelCounts) -> Self {
        let t = c.total().max(1) as f64;
        Self {
            ground: c.ground as f64 / t,
            excited: c.excited as f64 / t,
            leaked: c.leaked as f64 / t,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CycleFractions {
    pub x: LevelFractions,
    pub z: LevelFractions,
    pub all: LevelFractions,
}

/// Pre-readout ground/excited/leaked fractions for every cycle of a shot.
pub fn populations(record: &ShotRecord) -> Vec<CycleFractions> {
    record
        .populations
        .iter()
        .map(|p| CycleFractions {
            x: p.x.into(),
            z: p.z.into(),
            all: p.combined().into(),
        })
        .collect()
}

/// Mean leaked fraction just before the last readout of `pilot_cycles`-long
/// runs that start without leaked checks.
pub fn estimate_steady_leak(
    code: &CssCode,
    schedule: &ScheduleSpec,
    params: &NoiseParams,
    protocol: Protocol,
    pilot_shots: usize,
    pilot_cycles: usize,
    seed: u64,
) -> Result<f64, CircuitError> {
    if params.p_leak == 0.0 {
        return Ok(0.0);
    }
    if params.p_seep == 0.0 {
        log::warn!("p_seep = 0 with p_leak > 0: leaked population grows without a steady state");
    } else {
        let need = (5.0 / params.p_seep).ceil() as usize;
        if pilot_cycles < need {
            log::warn!("{pilot_cycles} pilot cycles is below the {need} needed to approach steady state");
        }
    }
    let window = repeat_window(build_cycle(code, schedule, protocol)?, pilot_cycles)?;
    let mut leaked = 0usize;
    let mut total = 0usize;
    for shot in 0..pilot_shots {
        let state = init_state(code, shot_seed(seed, shot as u64), 0.0);
        let rec = run_shot(&window, params, state);
        let last = rec.populations.last().expect("window has cycles").combined();
        leaked += last.leaked;
        total += last.total();
    }
    Ok(leaked as f64 / total.max(1) as f64)
}
