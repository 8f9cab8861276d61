//! Syndrome-cycle circuits: check preparation, scheduled CNOT rounds with
//! short idles, optional conditional flips, readout and the long idle.
//!
//! X-checks are modeled in the Z basis with an implicit basis change: they are
//! CNOT controls (data targets) and their outcome is carried by the Z frame.
//! Z-checks are CNOT targets (data controls) and their outcome is carried by the
//! X frame.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::code::CssCode;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("schedule refers to polynomial terms but the code has no bivariate-bicycle layout")]
    NoBbLayout,
    #[error("{check_type:?}-check order {order:?} must list each of {expected} labels exactly once")]
    BadOrder {
        check_type: CheckType,
        order: Vec<NeighborLabel>,
        expected: usize,
    },
    #[error("schedule offsets must be at least 1 (got x={x_offset}, z={z_offset})")]
    BadOffset { x_offset: usize, z_offset: usize },
    #[error("qubit {qubit} is used twice in CNOT round {round}")]
    RoundConflict { qubit: usize, round: usize },
    #[error("X-check {x_check} and Z-check {z_check} are interleaved with an odd number of crossings")]
    NonCommutingOrder { x_check: usize, z_check: usize },
    #[error("a window needs at least one cycle")]
    EmptyWindow,
    #[error("bad neighbor label `{0}`")]
    BadLabel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckType {
    X,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Plain,
    Flip,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Plain => "plain",
            Protocol::Flip => "flip",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "plain" => Ok(Protocol::Plain),
            "flip" => Ok(Protocol::Flip),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    PrepCheck,
    Cnot,
    IdleShort,
    IdleLong,
    CondFlip,
    MeasureCheck,
}

/// One gate. For `Cnot`, `qubits = [control, target]`; single-qubit gates
/// repeat the qubit in both slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: [usize; 2],
    pub round: usize,
}

impl GateOp {
    fn single(kind: GateKind, q: usize, round: usize) -> Self {
        Self {
            kind,
            qubits: [q, q],
            round,
        }
    }
}

/// Index space: data qubits, then X-checks, then Z-checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QubitLayout {
    pub n_data: usize,
    pub n_x_checks: usize,
    pub n_z_checks: usize,
}

impl QubitLayout {
    pub fn for_code(code: &CssCode) -> Self {
        Self {
            n_data: code.n,
            n_x_checks: code.n_x_checks(),
            n_z_checks: code.n_z_checks(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data + self.n_checks()
    }

    pub fn n_checks(&self) -> usize {
        self.n_x_checks + self.n_z_checks
    }

    pub fn x_check(&self, i: usize) -> usize {
        self.n_data + i
    }

    pub fn z_check(&self, i: usize) -> usize {
        self.n_data + self.n_x_checks + i
    }

    /// Global check index (X-checks first) of a check qubit.
    #[inline]
    pub fn check_slot(&self, qubit: usize) -> Option<usize> {
        (qubit >= self.n_data && qubit < self.n_qubits()).then(|| qubit - self.n_data)
    }

    #[inline]
    pub fn check_type(&self, slot: usize) -> CheckType {
        if slot < self.n_x_checks {
            CheckType::X
        } else {
            CheckType::Z
        }
    }

    #[inline]
    pub fn is_data(&self, qubit: usize) -> bool {
        qubit < self.n_data
    }
}

/// A polynomial term naming one neighbor of a bivariate-bicycle check:
/// `A1..A3`, `B1..B3` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NeighborLabel {
    A(usize),
    B(usize),
}

impl fmt::Display for NeighborLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborLabel::A(k) => write!(f, "A{}", k + 1),
            NeighborLabel::B(k) => write!(f, "B{}", k + 1),
        }
    }
}

impl FromStr for NeighborLabel {
    type Err = CircuitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || CircuitError::BadLabel(s.to_string());
        let (head, idx) = s.split_at(1.min(s.len()));
        let k: usize = idx.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match head {
            "A" | "a" => Ok(NeighborLabel::A(k - 1)),
            "B" | "b" => Ok(NeighborLabel::B(k - 1)),
            _ => Err(bad()),
        }
    }
}

pub fn parse_order(s: &str) -> Result<Vec<NeighborLabel>, CircuitError> {
    s.split([',', ' ']).filter(|t| !t.trim().is_empty()).map(NeighborLabel::from_str).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleSpec {
    /// Bivariate-bicycle schedule: X-checks touch their neighbors in `x_order`
    /// starting at CNOT round `x_offset` (1-based), Z-checks likewise.
    Bb {
        x_order: Vec<NeighborLabel>,
        z_order: Vec<NeighborLabel>,
        x_offset: usize,
        z_offset: usize,
    },
    /// Any CSS code: all Z-check CNOTs packed greedily into rounds, then all
    /// X-check CNOTs.
    Sequential,
}

impl ScheduleSpec {
    /// Seven-round interleaved schedule for weight-6 bivariate-bicycle codes.
    /// Each data qubit idles in exactly one round, and every X/Z check pair
    /// crosses an even number of times.
    pub fn bb_default() -> Self {
        use NeighborLabel::{A, B};
        ScheduleSpec::Bb {
            x_order: vec![A(1), B(1), B(0), B(2), A(0), A(2)],
            z_order: vec![A(0), A(2), B(0), B(1), B(2), A(1)],
            x_offset: 2,
            z_offset: 1,
        }
    }

    /// `bb_default` for codes with a BB layout, `Sequential` otherwise.
    pub fn default_for(code: &CssCode) -> Self {
        if code.bb.is_some() {
            Self::bb_default()
        } else {
            ScheduleSpec::Sequential
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Prep,
    CnotRound(usize),
    CondFlip,
    Measure,
    IdleLong,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    pub kind: LayerKind,
    pub gates: Vec<GateOp>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub prep: usize,
    pub cnot: usize,
    pub idle_short: usize,
    pub idle_long: usize,
    pub cond_flip: usize,
    pub measure: usize,
}

impl GateCounts {
    fn add(&mut self, kind: GateKind, times: usize) {
        match kind {
            GateKind::PrepCheck => self.prep += times,
            GateKind::Cnot => self.cnot += times,
            GateKind::IdleShort => self.idle_short += times,
            GateKind::IdleLong => self.idle_long += times,
            GateKind::CondFlip => self.cond_flip += times,
            GateKind::MeasureCheck => self.measure += times,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleCircuit {
    pub layout: QubitLayout,
    pub layers: Vec<Layer>,
    pub protocol: Protocol,
    pub n_cnot_rounds: usize,
}

impl CycleCircuit {
    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in self.layers.iter().flat_map(|l| &l.gates) {
            c.add(g.kind, 1);
        }
        c
    }

    pub fn n_gates(&self) -> usize {
        self.layers.iter().map(|l| l.gates.len()).sum()
    }
}

/// CNOT edges of one check: `(round, data_qubit)`.
type CheckEdges = Vec<Vec<(usize, usize)>>;

fn bb_edges(
    code: &CssCode,
    x_order: &[NeighborLabel],
    z_order: &[NeighborLabel],
    x_offset: usize,
    z_offset: usize,
) -> Result<(CheckEdges, CheckEdges), CircuitError> {
    let layout = code.bb.as_ref().ok_or(CircuitError::NoBbLayout)?;
    if x_offset == 0 || z_offset == 0 {
        return Err(CircuitError::BadOffset { x_offset, z_offset });
    }
    let labels: Vec<NeighborLabel> = (0..layout.a_terms.len())
        .map(NeighborLabel::A)
        .chain((0..layout.b_terms.len()).map(NeighborLabel::B))
        .collect();
    for (check_type, order) in [(CheckType::X, x_order), (CheckType::Z, z_order)] {
        let ok = order.len() == labels.len() && labels.iter().all(|l| order.iter().filter(|o| *o == l).count() == 1);
        if !ok {
            return Err(CircuitError::BadOrder {
                check_type,
                order: order.to_vec(),
                expected: labels.len(),
            });
        }
    }
    let x_edges = (0..code.n_x_checks())
        .map(|c| {
            x_order
                .iter()
                .enumerate()
                .map(|(i, lab)| {
                    let q = match *lab {
                        NeighborLabel::A(k) => layout.x_check_neighbor(c, true, k),
                        NeighborLabel::B(k) => layout.x_check_neighbor(c, false, k),
                    };
                    (x_offset + i, q)
                })
                .collect()
        })
        .collect();
    let z_edges = (0..code.n_z_checks())
        .map(|c| {
            z_order
                .iter()
                .enumerate()
                .map(|(i, lab)| {
                    let q = match *lab {
                        NeighborLabel::A(k) => layout.z_check_neighbor(c, true, k),
                        NeighborLabel::B(k) => layout.z_check_neighbor(c, false, k),
                    };
                    (z_offset + i, q)
                })
                .collect()
        })
        .collect();
    Ok((x_edges, z_edges))
}

fn sequential_edges(code: &CssCode) -> (CheckEdges, CheckEdges) {
    // Greedy edge colouring; every qubit appears at most once per round.
    fn pack(h: &crate::gf2::BitMatrix, first_round: usize, n_data: usize) -> (CheckEdges, usize) {
        let mut data_busy: Vec<Vec<usize>> = vec![Vec::new(); n_data];
        let mut last = first_round - 1;
        let edges = (0..h.n_rows())
            .map(|c| {
                let mut used: Vec<usize> = Vec::new();
                h.row_support(c)
                    .into_iter()
                    .map(|q| {
                        let mut r = first_round;
                        while used.contains(&r) || data_busy[q].contains(&r) {
                            r += 1;
                        }
                        used.push(r);
                        data_busy[q].push(r);
                        last = last.max(r);
                        (r, q)
                    })
                    .collect()
            })
            .collect();
        (edges, last)
    }
    let (z_edges, z_last) = pack(&code.hz, 1, code.n);
    let (x_edges, _) = pack(&code.hx, z_last + 1, code.n);
    (x_edges, z_edges)
}

/// Checks that every X/Z check pair sharing data qubits crosses an even number
/// of times (X-before-Z on the shared qubits), so the interleaved circuit
/// measures the intended stabilizers.
fn verify_crossings(x_edges: &CheckEdges, z_edges: &CheckEdges, n_data: usize) -> Result<(), CircuitError> {
    let mut z_by_qubit: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_data];
    for (zc, edges) in z_edges.iter().enumerate() {
        for &(r, q) in edges {
            z_by_qubit[q].push((zc, r));
        }
    }
    for (xc, edges) in x_edges.iter().enumerate() {
        let mut crossings: Vec<(usize, usize)> = Vec::new();
        for &(xr, q) in edges {
            for &(zc, zr) in &z_by_qubit[q] {
                match crossings.iter_mut().find(|(c, _)| *c == zc) {
                    Some(entry) => entry.1 += usize::from(xr < zr),
                    None => crossings.push((zc, usize::from(xr < zr))),
                }
            }
        }
        if let Some(&(z_check, _)) = crossings.iter().find(|(_, n)| n % 2 == 1) {
            return Err(CircuitError::NonCommutingOrder { x_check: xc, z_check });
        }
    }
    Ok(())
}

/// Builds one syndrome cycle: prep, CNOT rounds (idle-short on uncovered data
/// qubits), conditional flips under [`Protocol::Flip`], readout, long idle.
pub fn build_cycle(code: &CssCode, schedule: &ScheduleSpec, protocol: Protocol) -> Result<CycleCircuit, CircuitError> {
    let layout = QubitLayout::for_code(code);
    let (x_edges, z_edges) = match schedule {
        ScheduleSpec::Bb {
            x_order,
            z_order,
            x_offset,
            z_offset,
        } => bb_edges(code, x_order, z_order, *x_offset, *z_offset)?,
        ScheduleSpec::Sequential => sequential_edges(code),
    };
    let n_rounds = x_edges
        .iter()
        .chain(&z_edges)
        .flat_map(|e| e.iter().map(|(r, _)| *r))
        .max()
        .unwrap_or(0);

    let mut layers = Vec::with_capacity(n_rounds + 4);
    layers.push(Layer {
        kind: LayerKind::Prep,
        gates: (0..layout.n_checks())
            .map(|s| GateOp::single(GateKind::PrepCheck, layout.n_data + s, 0))
            .collect(),
    });
    for round in 1..=n_rounds {
        let mut busy = vec![false; layout.n_qubits()];
        let mut gates = Vec::new();
        let mut claim = |q: usize| -> Result<(), CircuitError> {
            if std::mem::replace(&mut busy[q], true) {
                Err(CircuitError::RoundConflict { qubit: q, round })
            } else {
                Ok(())
            }
        };
        for (c, edges) in z_edges.iter().enumerate() {
            for &(r, q) in edges {
                if r == round {
                    let check = layout.z_check(c);
                    claim(q)?;
                    claim(check)?;
                    gates.push(GateOp {
                        kind: GateKind::Cnot,
                        qubits: [q, check],
                        round,
                    });
                }
            }
        }
        for (c, edges) in x_edges.iter().enumerate() {
            for &(r, q) in edges {
                if r == round {
                    let check = layout.x_check(c);
                    claim(q)?;
                    claim(check)?;
                    gates.push(GateOp {
                        kind: GateKind::Cnot,
                        qubits: [check, q],
                        round,
                    });
                }
            }
        }
        for (q, &b) in busy.iter().enumerate().take(layout.n_data) {
            if !b {
                gates.push(GateOp::single(GateKind::IdleShort, q, round));
            }
        }
        layers.push(Layer {
            kind: LayerKind::CnotRound(round),
            gates,
        });
    }
    verify_crossings(&x_edges, &z_edges, code.n)?;

    let end = n_rounds + 1;
    if protocol == Protocol::Flip {
        layers.push(Layer {
            kind: LayerKind::CondFlip,
            gates: (0..layout.n_checks())
                .map(|s| GateOp::single(GateKind::CondFlip, layout.n_data + s, end))
                .collect(),
        });
    }
    layers.push(Layer {
        kind: LayerKind::Measure,
        gates: (0..layout.n_checks())
            .map(|s| GateOp::single(GateKind::MeasureCheck, layout.n_data + s, end))
            .collect(),
    });
    layers.push(Layer {
        kind: LayerKind::IdleLong,
        gates: (0..layout.n_data).map(|q| GateOp::single(GateKind::IdleLong, q, end)).collect(),
    });

    Ok(CycleCircuit {
        layout,
        layers,
        protocol,
        n_cnot_rounds: n_rounds,
    })
}

/// `n_cycles` repetitions of one cycle followed by a perfect terminal readout
/// of the data qubits (a bookkeeping marker, not a physical gate).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowCircuit {
    pub cycle: CycleCircuit,
    pub n_cycles: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowOp<'a> {
    Gate {
        cycle: usize,
        layer: usize,
        index: usize,
        gate: &'a GateOp,
    },
    TerminalReadout,
}

impl WindowCircuit {
    pub fn protocol(&self) -> Protocol {
        self.cycle.protocol
    }

    pub fn layout(&self) -> QubitLayout {
        self.cycle.layout
    }

    pub fn ops(&self) -> impl Iterator<Item = WindowOp<'_>> + '_ {
        (0..self.n_cycles)
            .flat_map(move |cycle| {
                self.cycle.layers.iter().enumerate().flat_map(move |(layer, l)| {
                    l.gates.iter().enumerate().map(move |(index, gate)| WindowOp::Gate {
                        cycle,
                        layer,
                        index,
                        gate,
                    })
                })
            })
            .chain(std::iter::once(WindowOp::TerminalReadout))
    }

    pub fn counts(&self) -> GateCounts {
        let c = self.cycle.counts();
        GateCounts {
            prep: c.prep * self.n_cycles,
            cnot: c.cnot * self.n_cycles,
            idle_short: c.idle_short * self.n_cycles,
            idle_long: c.idle_long * self.n_cycles,
            cond_flip: c.cond_flip * self.n_cycles,
            measure: c.measure * self.n_cycles,
        }
    }
}

pub fn repeat_window(cycle: CycleCircuit, n_cycles: usize) -> Result<WindowCircuit, CircuitError> {
    if n_cycles == 0 {
        return Err(CircuitError::EmptyWindow);
    }
    Ok(WindowCircuit { cycle, n_cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{gross_code, steane_code};

    fn check_invariants(code: &CssCode, c: &CycleCircuit) {
        let layout = c.layout;
        let mut measured = vec![0; layout.n_checks()];
        let mut idle_long = vec![0; layout.n_data];
        for (li, layer) in c.layers.iter().enumerate() {
            if let LayerKind::CnotRound(_) = layer.kind {
                let mut cover = vec![0; layout.n_data];
                for g in &layer.gates {
                    match g.kind {
                        GateKind::Cnot => {
                            assert_ne!(g.qubits[0], g.qubits[1]);
                            let d = if layout.is_data(g.qubits[0]) { g.qubits[0] } else { g.qubits[1] };
                            cover[d] += 1;
                        }
                        GateKind::IdleShort => cover[g.qubits[0]] += 1,
                        other => panic!("unexpected {other:?} in CNOT round"),
                    }
                }
                assert!(cover.iter().all(|&n| n == 1));
            }
            for g in &layer.gates {
                match g.kind {
                    GateKind::MeasureCheck => {
                        measured[layout.check_slot(g.qubits[0]).unwrap()] += 1;
                        if c.protocol == Protocol::Flip {
                            let prev = &c.layers[li - 1];
                            assert_eq!(prev.kind, LayerKind::CondFlip);
                            assert!(prev.gates.iter().any(|p| p.qubits[0] == g.qubits[0]));
                        }
                    }
                    GateKind::IdleLong => idle_long[g.qubits[0]] += 1,
                    GateKind::PrepCheck | GateKind::CondFlip => assert!(layout.check_slot(g.qubits[0]).is_some()),
                    _ => {}
                }
            }
        }
        assert!(measured.iter().all(|&n| n == 1));
        assert!(idle_long.iter().all(|&n| n == 1));
        // every check touches exactly its support
        let mut touched: Vec<Vec<usize>> = vec![Vec::new(); layout.n_checks()];
        for g in c.layers.iter().flat_map(|l| &l.gates).filter(|g| g.kind == GateKind::Cnot) {
            let (check, data) = if layout.is_data(g.qubits[0]) { (g.qubits[1], g.qubits[0]) } else { (g.qubits[0], g.qubits[1]) };
            touched[layout.check_slot(check).unwrap()].push(data);
        }
        for (s, t) in touched.iter_mut().enumerate() {
            t.sort();
            let want = if s < layout.n_x_checks { code.hx.row_support(s) } else { code.hz.row_support(s - layout.n_x_checks) };
            assert_eq!(*t, want);
        }
    }

    #[test]
    fn gross_default_cycle_counts() {
        let code = gross_code();
        let plain = build_cycle(&code, &ScheduleSpec::bb_default(), Protocol::Plain).unwrap();
        let counts = plain.counts();
        assert_eq!(counts.cnot, 864);
        assert_eq!(counts.idle_long, 144);
        assert_eq!(counts.cond_flip, 0);
        assert_eq!(counts.measure, 144);
        assert_eq!(plain.n_cnot_rounds, 7);
        // 7 rounds x 144 data qubits, 6 of them busy
        assert_eq!(counts.idle_short, 144);
        check_invariants(&code, &plain);

        let flip = build_cycle(&code, &ScheduleSpec::bb_default(), Protocol::Flip).unwrap();
        assert_eq!(flip.counts().cond_flip, 144);
        check_invariants(&code, &flip);
        let diff = GateCounts { cond_flip: 0, ..flip.counts() };
        assert_eq!(diff, counts);
    }

    #[test]
    fn schedule_with_block_conflict_is_rejected() {
        use NeighborLabel::{A, B};
        let bad = ScheduleSpec::Bb {
            x_order: vec![A(0), A(1), A(2), B(0), B(1), B(2)],
            z_order: vec![B(0), B(1), B(2), A(0), A(1), A(2)],
            x_offset: 2,
            z_offset: 1,
        };
        let err = build_cycle(&gross_code(), &bad, Protocol::Plain).unwrap_err();
        assert!(matches!(err, CircuitError::RoundConflict { round: 2, .. }), "{err:?}");
    }

    #[test]
    fn order_must_be_a_permutation() {
        use NeighborLabel::{A, B};
        let bad = ScheduleSpec::Bb {
            x_order: vec![A(0), A(0), A(2), B(0), B(1), B(2)],
            z_order: vec![B(0), B(1), B(2), A(0), A(1), A(2)],
            x_offset: 8,
            z_offset: 1,
        };
        assert!(matches!(build_cycle(&gross_code(), &bad, Protocol::Plain), Err(CircuitError::BadOrder { .. })));
        assert_eq!(
            build_cycle(&steane_code(), &ScheduleSpec::bb_default(), Protocol::Plain).unwrap_err(),
            CircuitError::NoBbLayout
        );
    }

    #[test]
    fn non_interleaved_bb_schedule_commutes() {
        use NeighborLabel::{A, B};
        let serial = ScheduleSpec::Bb {
            x_order: vec![A(0), A(1), A(2), B(0), B(1), B(2)],
            z_order: vec![B(0), B(1), B(2), A(0), A(1), A(2)],
            x_offset: 7,
            z_offset: 1,
        };
        let c = build_cycle(&gross_code(), &serial, Protocol::Plain).unwrap();
        assert_eq!(c.n_cnot_rounds, 12);
    }

    #[test]
    fn odd_crossings_detected() {
        use NeighborLabel::{A, B};
        // Swapping the last two Z labels of the default schedule breaks the crossing parity.
        let sched = ScheduleSpec::Bb {
            x_order: vec![A(1), B(1), B(0), B(2), A(0), A(2)],
            z_order: vec![A(0), A(2), B(0), B(1), A(1), B(2)],
            x_offset: 2,
            z_offset: 1,
        };
        let err = build_cycle(&gross_code(), &sched, Protocol::Plain).unwrap_err();
        assert!(
            matches!(err, CircuitError::NonCommutingOrder { .. } | CircuitError::RoundConflict { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn sequential_schedule_for_steane() {
        let code = steane_code();
        let c = build_cycle(&code, &ScheduleSpec::Sequential, Protocol::Flip).unwrap();
        check_invariants(&code, &c);
        assert_eq!(c.counts().cnot, 24);
    }

    #[test]
    fn window_repetition() {
        let code = gross_code();
        let cycle = build_cycle(&code, &ScheduleSpec::bb_default(), Protocol::Plain).unwrap();
        let per_cycle = cycle.n_gates();
        let one = repeat_window(cycle.clone(), 1).unwrap();
        let ops: Vec<_> = one.ops().collect();
        assert_eq!(ops.len(), per_cycle + 1);
        assert_eq!(ops.last(), Some(&WindowOp::TerminalReadout));
        let twelve = repeat_window(cycle.clone(), 12).unwrap();
        assert_eq!(twelve.counts().cnot, 12 * 864);
        assert_eq!(repeat_window(cycle, 0).unwrap_err(), CircuitError::EmptyWindow);
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_order("A1, B3,a2").unwrap(), vec![NeighborLabel::A(0), NeighborLabel::B(2), NeighborLabel::A(1)]);
        assert!(parse_order("C1").is_err());
        assert!(parse_order("A0").is_err());
        assert_eq!(NeighborLabel::B(1).to_string(), "B2");
    }
}
