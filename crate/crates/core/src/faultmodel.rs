//! Linearized per-sector decoding models.
//!
//! Every elementary fault is pushed through the noiseless remainder of the
//! window. Detector block `b < N` is `rep_b ^ rep_{b-1}` (with `rep_{-1}` the
//! ideal syndrome of the initial frame) and block `N` is `rep_{N-1} ^ H·final`.
//! A fault in cycle `c` that flips measured checks `F` in its own cycle and
//! leaves data residual `R` therefore flips `F` in block `c` and `F ^ H·R` in
//! block `c + 1`.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::circuit::{CheckType, GateKind, LayerKind, QubitLayout, WindowCircuit};
use crate::code::CssCode;
use crate::gf2::{BitMatrix, BitVec};
use crate::sim::{FaultAction, GateSite, NoiseParams, Pauli, ShotRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    /// X-type checks; sees the Z components of faults.
    XChecks,
    /// Z-type checks; sees the X components of faults.
    ZChecks,
}

impl Sector {
    pub const BOTH: [Sector; 2] = [Sector::XChecks, Sector::ZChecks];

    pub fn index(self) -> usize {
        match self {
            Sector::XChecks => 0,
            Sector::ZChecks => 1,
        }
    }

    pub fn check_type(self) -> CheckType {
        match self {
            Sector::XChecks => CheckType::X,
            Sector::ZChecks => CheckType::Z,
        }
    }

    pub fn parity_checks(self, code: &CssCode) -> &BitMatrix {
        match self {
            Sector::XChecks => &code.hx,
            Sector::ZChecks => &code.hz,
        }
    }

    /// Logical flips caused by a data residual of this sector's Pauli type.
    pub fn logical_action(self, code: &CssCode, residual: &BitVec) -> BitVec {
        match self {
            Sector::XChecks => code.z_logical_action(residual),
            Sector::ZChecks => code.x_logical_action(residual),
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sector::XChecks => "x-checks",
            Sector::ZChecks => "z-checks",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("fault at cycle {}, layer {}, gate {} flips a logical in the {sector} sector without flipping any detector", site.cycle, site.layer, site.index)]
    UndetectableLogical { site: GateSite, sector: Sector },
    #[error("merged prior {prior} of fault column {column} in the {sector} sector is not in (0, 0.5)")]
    PriorOutOfRange { sector: Sector, column: usize, prior: f64 },
    #[error("window layout does not match the code")]
    LayoutMismatch,
}

/// Detector rows and logical flips of one fault in one sector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SectorEffect {
    pub detectors: Vec<u32>,
    pub observables: Vec<u32>,
}

impl SectorEffect {
    pub fn is_trivial(&self) -> bool {
        self.detectors.is_empty() && self.observables.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementaryFault {
    pub site: GateSite,
    pub kind: GateKind,
    pub action: FaultAction,
    pub prior: f64,
    /// Indexed by `Sector::index`.
    pub effects: [SectorEffect; 2],
}

/// Effect of one fault within its own cycle, in sector-local check indices.
#[derive(Clone, Debug, Default)]
struct LocalEffect {
    measured: Vec<u32>,
    next: Vec<u32>,
    observables: Vec<u32>,
}

struct TemplateFault {
    layer: usize,
    index: usize,
    kind: GateKind,
    action: FaultAction,
    effects: [LocalEffect; 2],
}

/// Propagates single-qubit X (sector Z) or Z (sector X) frames from just
/// after `layer` to the end of the cycle.
struct Propagator<'a> {
    window: &'a WindowCircuit,
    layout: QubitLayout,
}

impl Propagator<'_> {
    /// Returns (measured flips over sector checks, data residual).
    fn run(&self, sector: Sector, start_layer: usize, qubits: &[usize]) -> (BitVec, BitVec) {
        let layout = self.layout;
        let mut frame = vec![0u8; layout.n_qubits()];
        for &q in qubits {
            frame[q] ^= 1;
        }
        let (offset, n_sector) = match sector {
            Sector::XChecks => (layout.n_data, layout.n_x_checks),
            Sector::ZChecks => (layout.n_data + layout.n_x_checks, layout.n_z_checks),
        };
        let mut measured = BitVec::zeros(n_sector);
        for layer in &self.window.cycle.layers[start_layer + 1..] {
            match layer.kind {
                LayerKind::CnotRound(_) => {
                    for g in &layer.gates {
                        if g.kind != GateKind::Cnot {
                            continue;
                        }
                        let [c, t] = g.qubits;
                        match sector {
                            Sector::ZChecks => frame[t] ^= frame[c],
                            Sector::XChecks => frame[c] ^= frame[t],
                        }
                    }
                }
                LayerKind::Measure => {
                    for i in 0..n_sector {
                        if frame[offset + i] == 1 {
                            measured.set(i, true);
                        }
                    }
                }
                LayerKind::Prep => {
                    for g in &layer.gates {
                        frame[g.qubits[0]] = 0;
                    }
                }
                LayerKind::CondFlip | LayerKind::IdleLong => {}
            }
        }
        let residual = BitVec::from_support(layout.n_data, (0..layout.n_data).filter(|&q| frame[q] == 1));
        (measured, residual)
    }
}

fn template_faults(window: &WindowCircuit, code: &CssCode) -> Vec<TemplateFault> {
    let layout = window.layout();
    let prop = Propagator { window, layout };
    let mut out = Vec::new();

    let local = |sector: Sector, layer: usize, qubits: &[usize]| -> LocalEffect {
        if qubits.is_empty() {
            return LocalEffect::default();
        }
        let (measured, residual) = prop.run(sector, layer, qubits);
        let next = measured.xor(&sector.parity_checks(code).mul_vec(&residual));
        LocalEffect {
            measured: measured.support().map(|i| i as u32).collect(),
            next: next.support().map(|i| i as u32).collect(),
            observables: sector.logical_action(code, &residual).support().map(|i| i as u32).collect(),
        }
    };
    let pauli_effects = |layer: usize, qubits: &[usize], paulis: &[Pauli]| -> [LocalEffect; 2] {
        let zs: Vec<usize> = qubits.iter().zip(paulis).filter(|(_, p)| p.has_z()).map(|(q, _)| *q).collect();
        let xs: Vec<usize> = qubits.iter().zip(paulis).filter(|(_, p)| p.has_x()).map(|(q, _)| *q).collect();
        [local(Sector::XChecks, layer, &zs), local(Sector::ZChecks, layer, &xs)]
    };

    for (li, layer) in window.cycle.layers.iter().enumerate() {
        for (gi, gate) in layer.gates.iter().enumerate() {
            let [a, b] = gate.qubits;
            match gate.kind {
                GateKind::Cnot => {
                    for ps in Pauli::two_qubit_non_identity() {
                        out.push(TemplateFault {
                            layer: li,
                            index: gi,
                            kind: gate.kind,
                            action: FaultAction::Pauli(ps),
                            effects: pauli_effects(li, &[a, b], &ps),
                        });
                    }
                }
                GateKind::IdleShort | GateKind::IdleLong => {
                    for p in Pauli::NON_IDENTITY {
                        out.push(TemplateFault {
                            layer: li,
                            index: gi,
                            kind: gate.kind,
                            action: FaultAction::Pauli([p, Pauli::I]),
                            effects: pauli_effects(li, &[a], &[p]),
                        });
                    }
                }
                GateKind::PrepCheck | GateKind::CondFlip => {
                    // the outcome-carrying bit of the check: Z for X-checks, X for Z-checks
                    let slot = a - layout.n_data;
                    let p = match layout.check_type(slot) {
                        CheckType::X => Pauli::Z,
                        CheckType::Z => Pauli::X,
                    };
                    out.push(TemplateFault {
                        layer: li,
                        index: gi,
                        kind: gate.kind,
                        action: FaultAction::Flip,
                        effects: pauli_effects(li, &[a], &[p]),
                    });
                }
                GateKind::MeasureCheck => {
                    let slot = a - layout.n_data;
                    let (sector, local_slot) = match layout.check_type(slot) {
                        CheckType::X => (Sector::XChecks, slot),
                        CheckType::Z => (Sector::ZChecks, slot - layout.n_x_checks),
                    };
                    let mut effects = [LocalEffect::default(), LocalEffect::default()];
                    effects[sector.index()] = LocalEffect {
                        measured: vec![local_slot as u32],
                        next: vec![local_slot as u32],
                        observables: Vec::new(),
                    };
                    out.push(TemplateFault {
                        layer: li,
                        index: gi,
                        kind: gate.kind,
                        action: FaultAction::Flip,
                        effects,
                    });
                }
            }
        }
    }
    out
}

/// State-independent prior of one elementary fault.
pub fn fault_prior(kind: GateKind, params: &NoiseParams) -> f64 {
    match kind {
        GateKind::Cnot => params.p_cnot / 15.0,
        GateKind::IdleShort => params.p_id_s / 3.0,
        GateKind::IdleLong => params.p_id_l / 3.0,
        GateKind::PrepCheck => params.p_prep,
        GateKind::CondFlip => params.p_flip,
        GateKind::MeasureCheck => params.p_read,
    }
}

/// Every elementary fault of the window (including zero-prior ones) with its
/// detector signature and logical action in both sectors.
pub fn enumerate_faults(window: &WindowCircuit, code: &CssCode, params: &NoiseParams) -> Result<Vec<ElementaryFault>, ModelError> {
    let layout = window.layout();
    if layout != QubitLayout::for_code(code) {
        return Err(ModelError::LayoutMismatch);
    }
    let template = template_faults(window, code);
    let sector_checks = [layout.n_x_checks as u32, layout.n_z_checks as u32];
    let mut out = Vec::with_capacity(template.len() * window.n_cycles);
    for cycle in 0..window.n_cycles {
        for tf in &template {
            let effects = std::array::from_fn(|s| {
                let e = &tf.effects[s];
                let n = sector_checks[s];
                let base = cycle as u32 * n;
                let mut detectors = Vec::with_capacity(e.measured.len() + e.next.len());
                detectors.extend(e.measured.iter().map(|&i| base + i));
                detectors.extend(e.next.iter().map(|&i| base + n + i));
                SectorEffect {
                    detectors,
                    observables: e.observables.clone(),
                }
            });
            let site = GateSite {
                cycle,
                layer: tf.layer,
                index: tf.index,
            };
            for sector in Sector::BOTH {
                let e: &SectorEffect = &effects[sector.index()];
                if e.detectors.is_empty() && !e.observables.is_empty() {
                    return Err(ModelError::UndetectableLogical { site, sector });
                }
            }
            out.push(ElementaryFault {
                site,
                kind: tf.kind,
                action: tf.action,
                prior: fault_prior(tf.kind, params),
                effects,
            });
        }
    }
    Ok(out)
}

/// Linear decoding problem for one sector of one window.
#[derive(Clone, Debug)]
pub struct DecodingModel {
    pub sector: Sector,
    pub n_cycles: usize,
    pub n_sector_checks: usize,
    /// Detectors × faults.
    pub h: BitMatrix,
    /// Logicals × faults.
    pub o: BitMatrix,
    pub priors: Vec<f64>,
    /// Detector support of each fault column.
    pub columns: Vec<Vec<u32>>,
    /// Fault support of each detector row.
    pub rows: Vec<Vec<u32>>,
    pub obs_columns: Vec<Vec<u32>>,
}

impl DecodingModel {
    pub fn n_detectors(&self) -> usize {
        self.rows.len()
    }

    pub fn n_faults(&self) -> usize {
        self.columns.len()
    }

    pub fn n_observables(&self) -> usize {
        self.o.n_rows()
    }

    /// Row of check `check` in block `block` (`block == n_cycles` is the final block).
    pub fn detector_index(&self, block: usize, check: usize) -> usize {
        assert!(block <= self.n_cycles && check < self.n_sector_checks);
        block * self.n_sector_checks + check
    }

    pub fn detector_label(&self, row: usize) -> (usize, usize) {
        (row / self.n_sector_checks, row % self.n_sector_checks)
    }

    pub fn syndrome_of(&self, correction: &BitVec) -> BitVec {
        let mut s = BitVec::zeros(self.n_detectors());
        for j in correction.support() {
            for &d in &self.columns[j] {
                s.toggle(d as usize);
            }
        }
        s
    }

    pub fn logical_of(&self, correction: &BitVec) -> BitVec {
        let mut l = BitVec::zeros(self.n_observables());
        for j in correction.support() {
            for &o in &self.obs_columns[j] {
                l.toggle(o as usize);
            }
        }
        l
    }

    /// Text dump: one line per detector, then one per fault column.
    pub fn write_dem<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# sector {} cycles {} checks {}", self.sector, self.n_cycles, self.n_sector_checks)?;
        for row in 0..self.n_detectors() {
            let (block, check) = self.detector_label(row);
            if block == self.n_cycles {
                writeln!(w, "detector D{row} cycle=final check={check}")?;
            } else {
                writeln!(w, "detector D{row} cycle={block} check={check}")?;
            }
        }
        for (j, col) in self.columns.iter().enumerate() {
            write!(w, "fault p={:.6e}", self.priors[j])?;
            for d in col {
                write!(w, " D{d}")?;
            }
            for o in &self.obs_columns[j] {
                write!(w, " L{o}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `p1 (1 - p2) + p2 (1 - p1)`: probability that exactly one of two
/// independent mechanisms fires.
pub fn merge_probability(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

/// Builds the `[x-check, z-check]` sector models; zero-prior faults are left out.
pub fn build_models(window: &WindowCircuit, code: &CssCode, params: &NoiseParams) -> Result<[DecodingModel; 2], ModelError> {
    let faults = enumerate_faults(window, code, params)?;
    let layout = window.layout();
    let n_checks = [layout.n_x_checks, layout.n_z_checks];
    let mut models = Vec::with_capacity(2);
    for sector in Sector::BOTH {
        let s = sector.index();
        let mut index: HashMap<&SectorEffect, usize> = HashMap::new();
        let mut keys: Vec<&SectorEffect> = Vec::new();
        let mut priors: Vec<f64> = Vec::new();
        for f in &faults {
            let e = &f.effects[s];
            if f.prior <= 0.0 || e.is_trivial() {
                continue;
            }
            match index.get(e) {
                Some(&j) => priors[j] = merge_probability(priors[j], f.prior),
                None => {
                    index.insert(e, keys.len());
                    keys.push(e);
                    priors.push(f.prior);
                }
            }
        }
        for (column, &prior) in priors.iter().enumerate() {
            if !(prior > 0.0 && prior < 0.5) {
                return Err(ModelError::PriorOutOfRange { sector, column, prior });
            }
        }
        let n_det = n_checks[s] * (window.n_cycles + 1);
        let columns: Vec<Vec<u32>> = keys.iter().map(|e| e.detectors.clone()).collect();
        let obs_columns: Vec<Vec<u32>> = keys.iter().map(|e| e.observables.clone()).collect();
        let mut rows = vec![Vec::new(); n_det];
        for (j, col) in columns.iter().enumerate() {
            for &d in col {
                rows[d as usize].push(j as u32);
            }
        }
        let h = BitMatrix::from_entries(
            n_det,
            columns.len(),
            columns.iter().enumerate().flat_map(|(j, c)| c.iter().map(move |&d| (d as usize, j))),
        );
        let o = BitMatrix::from_entries(
            code.k,
            columns.len(),
            obs_columns.iter().enumerate().flat_map(|(j, c)| c.iter().map(move |&l| (l as usize, j))),
        );
        models.push(DecodingModel {
            sector,
            n_cycles: window.n_cycles,
            n_sector_checks: n_checks[s],
            h,
            o,
            priors,
            columns,
            rows,
            obs_columns,
        });
    }
    let z = models.pop().expect("two sectors");
    let x = models.pop().expect("two sectors");
    Ok([x, z])
}

/// Detector vectors `[x-check, z-check]` of one shot.
pub fn detectors(record: &ShotRecord, code: &CssCode) -> [BitVec; 2] {
    let nx = code.n_x_checks();
    Sector::BOTH.map(|sector| {
        let (offset, n_s, init, fin) = match sector {
            Sector::XChecks => (0, nx, &record.initial_z, &record.final_z),
            Sector::ZChecks => (nx, code.n_z_checks(), &record.initial_x, &record.final_x),
        };
        let hmat = sector.parity_checks(code);
        let n_cycles = record.reported_syndromes.len();
        let mut out = BitVec::zeros(n_s * (n_cycles + 1));
        let mut prev = hmat.mul_vec(init);
        for (b, rep) in record.reported_syndromes.iter().enumerate() {
            let cur = BitVec::from_bools(&(0..n_s).map(|i| rep.get(offset + i)).collect::<Vec<_>>());
            for i in prev.xor(&cur).support() {
                out.set(b * n_s + i, true);
            }
            prev = cur;
        }
        for i in prev.xor(&hmat.mul_vec(fin)).support() {
            out.set(n_cycles * n_s + i, true);
        }
        out
    })
}

/// Logical flips actually suffered by the data, `[x-check sector, z-check sector]`.
pub fn true_logical_flips(record: &ShotRecord, code: &CssCode) -> [BitVec; 2] {
    [
        Sector::XChecks.logical_action(code, &record.initial_z.xor(&record.final_z)),
        Sector::ZChecks.logical_action(code, &record.initial_x.xor(&record.final_x)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_cycle, repeat_window, Protocol, ScheduleSpec};
    use crate::code::{gross_code, steane_code};

    fn window(code: &CssCode, protocol: Protocol, n: usize) -> WindowCircuit {
        repeat_window(build_cycle(code, &ScheduleSpec::default_for(code), protocol).unwrap(), n).unwrap()
    }

    #[test]
    fn readout_flip_hits_two_consecutive_detectors() {
        let code = gross_code();
        let w = window(&code, Protocol::Plain, 4);
        let faults = enumerate_faults(&w, &code, &NoiseParams::reference()).unwrap();
        let f = faults
            .iter()
            .find(|f| f.kind == GateKind::MeasureCheck && f.site.cycle == 2 && f.site.index == 100)
            .unwrap();
        let c = 100 - 72;
        let z = &f.effects[Sector::ZChecks.index()];
        assert_eq!(z.detectors, vec![2 * 72 + c, 3 * 72 + c]);
        assert!(z.observables.is_empty());
        assert!(f.effects[0].is_trivial());
    }

    #[test]
    fn idle_long_x_flips_column_weight_detectors() {
        let code = gross_code();
        let w = window(&code, Protocol::Flip, 3);
        let faults = enumerate_faults(&w, &code, &NoiseParams::reference()).unwrap();
        for f in faults.iter().filter(|f| f.kind == GateKind::IdleLong && f.site.cycle == 1) {
            if f.action != FaultAction::Pauli([Pauli::X, Pauli::I]) {
                continue;
            }
            let q = w.cycle.layers[f.site.layer].gates[f.site.index].qubits[0];
            let e = &f.effects[Sector::ZChecks.index()];
            assert_eq!(e.detectors.len(), code.hz.col_weight(q));
            assert!(e.detectors.iter().all(|&d| d / 72 == 2));
            assert!(f.effects[0].is_trivial());
        }
    }

    #[test]
    fn merge_formula() {
        assert!((merge_probability(0.02, 0.0002) - 0.020192).abs() < 1e-15);
        assert_eq!(merge_probability(0.1, 0.0), 0.1);
    }

    #[test]
    fn flip_prior_merges_into_readout_column() {
        let code = gross_code();
        // only readout and conditional-flip faults, which share signatures
        let mut params = NoiseParams::zero();
        params.p_read = 0.02;
        params.p_flip = 0.0002;
        let w = window(&code, Protocol::Flip, 3);
        let [_, zm] = build_models(&w, &code, &params).unwrap();
        let target = vec![72 + 5, 2 * 72 + 5];
        let j = zm.columns.iter().position(|c| *c == target).unwrap();
        assert!((zm.priors[j] - 0.020192).abs() < 1e-12, "{}", zm.priors[j]);
    }

    #[test]
    fn model_shape_and_invariants() {
        let code = gross_code();
        let w = window(&code, Protocol::Plain, 12);
        let models = build_models(&w, &code, &NoiseParams::reference()).unwrap();
        for m in &models {
            assert_eq!(m.n_detectors(), 72 * 13);
            assert_eq!(m.n_observables(), 12);
            assert!(m.priors.iter().all(|&p| p > 0.0 && p < 0.5));
            assert!(m.columns.iter().zip(&m.obs_columns).all(|(c, o)| !c.is_empty() || !o.is_empty()));
            let mut keys: Vec<_> = m.columns.iter().zip(&m.obs_columns).collect();
            keys.sort();
            keys.dedup();
            assert_eq!(keys.len(), m.n_faults());
        }
    }

    #[test]
    fn steane_models_build() {
        let code = steane_code();
        let w = window(&code, Protocol::Plain, 2);
        let [xm, zm] = build_models(&w, &code, &NoiseParams::uniform(0.01)).unwrap();
        assert_eq!(xm.n_detectors(), 9);
        assert_eq!(zm.n_detectors(), 9);
        let mut buf = Vec::new();
        zm.write_dem(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("fault")).count(), zm.n_faults());
        assert!(text.contains("detector D8 cycle=final check=2"));
    }
}
