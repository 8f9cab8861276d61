//! Belief propagation with ordered-statistics post-processing.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::code::CssCode;
use crate::faultmodel::{true_logical_flips, DecodingModel, Sector};
use crate::gf2::{BitMatrix, BitVec};
use crate::sim::ShotRecord;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("syndrome has {got} bits but the {sector} model has {expected} detectors")]
    SyndromeLength { sector: Sector, expected: usize, got: usize },
    #[error("syndrome is not in the column space of the {sector} model")]
    Inconsistent { sector: Sector },
    #[error("invalid decoder configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BpVariant {
    ProductSum,
    MinSum { scale: f64 },
}

impl fmt::Display for BpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BpVariant::ProductSum => f.write_str("product-sum"),
            BpVariant::MinSum { .. } => f.write_str("min-sum"),
        }
    }
}

impl FromStr for BpVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "product-sum" | "product_sum" => Ok(BpVariant::ProductSum),
            "min-sum" | "min_sum" => Ok(BpVariant::MinSum { scale: 0.625 }),
            other => Err(format!("unknown BP variant `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    pub max_iters: usize,
    pub variant: BpVariant,
    pub llr_clamp: f64,
    pub osd_order: usize,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            variant: BpVariant::ProductSum,
            llr_clamp: 30.0,
            osd_order: 7,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.max_iters == 0 {
            return Err(DecodeError::Config("max_iters must be at least 1".into()));
        }
        if self.llr_clamp.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(DecodeError::Config("llr_clamp must be positive".into()));
        }
        if let BpVariant::MinSum { scale } = self.variant {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(DecodeError::Config("min-sum scale must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub correction: BitVec,
    pub predicted_logical_flips: BitVec,
    pub used_osd: bool,
    /// Posterior log-likelihood ratios `ln(P(no fault) / P(fault))`.
    pub posteriors: Vec<f64>,
}

/// Edge-indexed Tanner graph of one model, shared read-only across decodes.
#[derive(Clone, Debug)]
pub struct SectorDecoder<'m> {
    model: &'m DecodingModel,
    cfg: BpConfig,
    /// Edges grouped by detector: `row_start[r]..row_start[r + 1]`.
    row_start: Vec<usize>,
    edge_var: Vec<u32>,
    /// Edge ids grouped by fault column.
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
    prior_llr: Vec<f64>,
}

impl<'m> SectorDecoder<'m> {
    pub fn new(model: &'m DecodingModel, cfg: BpConfig) -> Result<Self, DecodeError> {
        cfg.validate()?;
        let mut row_start = Vec::with_capacity(model.n_detectors() + 1);
        let mut edge_var = Vec::new();
        row_start.push(0);
        for row in &model.rows {
            edge_var.extend_from_slice(row);
            row_start.push(edge_var.len());
        }
        let nf = model.n_faults();
        let mut var_start = vec![0usize; nf + 1];
        for &v in &edge_var {
            var_start[v as usize + 1] += 1;
        }
        for j in 0..nf {
            var_start[j + 1] += var_start[j];
        }
        let mut fill = var_start.clone();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        let prior_llr = model.priors.iter().map(|&p| ((1.0 - p) / p).ln()).collect();
        Ok(Self {
            model,
            cfg,
            row_start,
            edge_var,
            var_start,
            var_edges,
            prior_llr,
        })
    }

    pub fn model(&self) -> &DecodingModel {
        self.model
    }

    fn check_len(&self, syndrome: &BitVec) -> Result<(), DecodeError> {
        if syndrome.len() != self.model.n_detectors() {
            return Err(DecodeError::SyndromeLength {
                sector: self.model.sector,
                expected: self.model.n_detectors(),
                got: syndrome.len(),
            });
        }
        Ok(())
    }

    /// Flooding-schedule BP; stops at the first iteration whose hard decision
    /// reproduces the syndrome.
    pub fn bp(&self, syndrome: &BitVec) -> Result<DecodeOutcome, DecodeError> {
        self.check_len(syndrome)?;
        let clamp = self.cfg.llr_clamp;
        let n_edges = self.edge_var.len();
        let nf = self.model.n_faults();
        let n_rows = self.model.n_detectors();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| self.prior_llr[v as usize]).collect();
        let mut c2v = vec![0.0f64; n_edges];
        let mut post = self.prior_llr.clone();
        let mut hard = vec![false; nf];
        let mut scratch = Vec::new();
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.cfg.max_iters {
            iterations += 1;
            for r in 0..n_rows {
                let (lo, hi) = (self.row_start[r], self.row_start[r + 1]);
                if lo == hi {
                    continue;
                }
                let flip = syndrome.get(r);
                match self.cfg.variant {
                    BpVariant::ProductSum => product_sum_row(&v2c[lo..hi], &mut c2v[lo..hi], flip, clamp, &mut scratch),
                    BpVariant::MinSum { scale } => min_sum_row(&v2c[lo..hi], &mut c2v[lo..hi], flip, scale),
                }
            }
            for j in 0..nf {
                let edges = &self.var_edges[self.var_start[j]..self.var_start[j + 1]];
                let total = self.prior_llr[j] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                post[j] = total;
                hard[j] = total < 0.0;
                for &e in edges {
                    v2c[e as usize] = (total - c2v[e as usize]).clamp(-clamp, clamp);
                }
            }
            if (0..n_rows).all(|r| {
                let row = &self.edge_var[self.row_start[r]..self.row_start[r + 1]];
                row.iter().filter(|&&v| hard[v as usize]).count() % 2 == syndrome.get(r) as usize
            }) {
                converged = true;
                break;
            }
        }
        let correction = BitVec::from_bools(&hard);
        let predicted_logical_flips = self.model.logical_of(&correction);
        Ok(DecodeOutcome {
            converged,
            iterations,
            correction,
            predicted_logical_flips,
            used_osd: false,
            posteriors: post,
        })
    }

    /// Ordered-statistics decoding with combination sweep of the given order.
    pub fn osd(&self, syndrome: &BitVec, posteriors: &[f64], order: usize) -> Result<BitVec, DecodeError> {
        self.check_len(syndrome)?;
        osd_solve(self.model, syndrome, posteriors, order)
    }

    /// BP, then OSD if BP did not converge.
    pub fn decode(&self, syndrome: &BitVec) -> Result<DecodeOutcome, DecodeError> {
        let mut out = self.bp(syndrome)?;
        if !out.converged {
            let c = self.osd(syndrome, &out.posteriors, self.cfg.osd_order)?;
            out.predicted_logical_flips = self.model.logical_of(&c);
            out.correction = c;
            out.used_osd = true;
        }
        Ok(out)
    }
}

fn product_sum_row(v2c: &[f64], c2v: &mut [f64], flip: bool, clamp: f64, scratch: &mut Vec<f64>) {
    let n = v2c.len();
    scratch.clear();
    // tanh(m / 2) = 1 - 2 / (1 + e^m)
    scratch.extend(v2c.iter().map(|&m| 1.0 - 2.0 / (1.0 + m.exp())));
    // suffix products in c2v, prefix product carried forward
    let mut acc = 1.0;
    for i in (0..n).rev() {
        c2v[i] = acc;
        acc *= scratch[i];
    }
    let sign = if flip { -1.0 } else { 1.0 };
    let bound = 1.0 - 1e-15;
    let mut prefix = 1.0;
    for i in 0..n {
        let p = (prefix * c2v[i]).clamp(-bound, bound);
        // 2 atanh(p) = ln((1 + p) / (1 - p))
        c2v[i] = (sign * ((1.0 + p) / (1.0 - p)).ln()).clamp(-clamp, clamp);
        prefix *= scratch[i];
    }
}

fn min_sum_row(v2c: &[f64], c2v: &mut [f64], flip: bool, scale: f64) {
    let mut neg = flip;
    let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
    for (i, &m) in v2c.iter().enumerate() {
        neg ^= m < 0.0;
        let a = m.abs();
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, &m) in v2c.iter().enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let s = neg ^ (m < 0.0);
        c2v[i] = if s { -scale * mag } else { scale * mag };
    }
}

fn osd_solve(model: &DecodingModel, syndrome: &BitVec, posteriors: &[f64], order: usize) -> Result<BitVec, DecodeError> {
    let nf = model.n_faults();
    let n_rows = model.n_detectors();
    assert_eq!(posteriors.len(), nf, "one posterior per fault column");
    // most likely faults first
    let mut perm: Vec<usize> = (0..nf).collect();
    perm.sort_by(|&a, &b| posteriors[a].total_cmp(&posteriors[b]));

    let mut m = BitMatrix::zeros(n_rows, nf + 1);
    for (pos, &j) in perm.iter().enumerate() {
        for &d in &model.columns[j] {
            m.set(d as usize, pos, true);
        }
    }
    for d in syndrome.support() {
        m.set(d, nf, true);
    }
    let ech = m.row_reduce_limited(nf);
    let rank = ech.rank();
    if (rank..n_rows).any(|r| m.get(r, nf)) {
        return Err(DecodeError::Inconsistent { sector: model.sector });
    }

    let weight: Vec<f64> = perm.iter().map(|&j| ((1.0 - model.priors[j]) / model.priors[j]).ln()).collect();
    let pivot_weight: Vec<f64> = ech.pivots.iter().map(|&c| weight[c]).collect();
    let mut is_pivot = vec![false; nf];
    for &c in &ech.pivots {
        is_pivot[c] = true;
    }
    let free: Vec<usize> = (0..nf).filter(|&c| !is_pivot[c]).collect();

    let base: Vec<bool> = (0..rank).map(|r| m.get(r, nf)).collect();
    let base_cost: f64 = (0..rank).filter(|&r| base[r]).map(|r| pivot_weight[r]).sum();

    // reduced columns of the free set, as row supports
    let mut free_pos = vec![usize::MAX; nf];
    for (i, &c) in free.iter().enumerate() {
        free_pos[c] = i;
    }
    let mut free_cols: Vec<Vec<u32>> = vec![Vec::new(); free.len()];
    for r in 0..rank {
        for (w, &word) in m.row_words(r).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let c = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if c < nf && free_pos[c] != usize::MAX {
                    free_cols[free_pos[c]].push(r as u32);
                }
            }
        }
    }

    let delta = |pivot_bits: &[u32], flipped: &mut Vec<bool>| -> f64 {
        let mut d = 0.0;
        for &r in pivot_bits {
            let r = r as usize;
            flipped[r] ^= true;
        }
        for &r in pivot_bits {
            let r = r as usize;
            if flipped[r] {
                d += if base[r] { -pivot_weight[r] } else { pivot_weight[r] };
                flipped[r] = false;
            }
        }
        d
    };

    let mut best_cost = base_cost;
    let mut best: Vec<usize> = Vec::new();
    let mut flipped = vec![false; rank];
    if order > 0 {
        for (i, &c) in free.iter().enumerate() {
            let cost = base_cost + weight[c] + delta(&free_cols[i], &mut flipped);
            if cost < best_cost {
                best_cost = cost;
                best = vec![i];
            }
        }
        let lead = order.min(free.len());
        let mut merged = Vec::new();
        for a in 0..lead {
            for b in a + 1..lead {
                merged.clear();
                merged.extend_from_slice(&free_cols[a]);
                merged.extend_from_slice(&free_cols[b]);
                let cost = base_cost + weight[free[a]] + weight[free[b]] + delta(&merged, &mut flipped);
                if cost < best_cost {
                    best_cost = cost;
                    best = vec![a, b];
                }
            }
        }
    }

    let mut pivot_bits = base;
    for &i in &best {
        for &r in &free_cols[i] {
            pivot_bits[r as usize] ^= true;
        }
    }
    let mut out = BitVec::zeros(nf);
    for (r, &p) in ech.pivots.iter().enumerate() {
        if pivot_bits[r] {
            out.set(perm[p], true);
        }
    }
    for &i in &best {
        out.set(perm[free[i]], true);
    }
    Ok(out)
}

/// One-shot BP on `model` (builds the Tanner graph each call).
pub fn bp_decode(model: &DecodingModel, syndrome: &BitVec, cfg: &BpConfig) -> Result<DecodeOutcome, DecodeError> {
    SectorDecoder::new(model, *cfg)?.bp(syndrome)
}

/// OSD with combination sweep; the result always reproduces `syndrome`.
pub fn osd_decode(model: &DecodingModel, syndrome: &BitVec, posteriors: &[f64], order: usize) -> Result<BitVec, DecodeError> {
    if syndrome.len() != model.n_detectors() {
        return Err(DecodeError::SyndromeLength {
            sector: model.sector,
            expected: model.n_detectors(),
            got: syndrome.len(),
        });
    }
    osd_solve(model, syndrome, posteriors, order)
}

/// Decoders for both sectors of one window.
#[derive(Clone, Debug)]
pub struct WindowDecoder<'m> {
    pub sectors: [SectorDecoder<'m>; 2],
}

impl<'m> WindowDecoder<'m> {
    pub fn new(models: &'m [DecodingModel; 2], cfg: BpConfig) -> Result<Self, DecodeError> {
        Ok(Self {
            sectors: [SectorDecoder::new(&models[0], cfg)?, SectorDecoder::new(&models[1], cfg)?],
        })
    }

    pub fn decode(&self, detectors: &[BitVec; 2]) -> Result<[DecodeOutcome; 2], DecodeError> {
        Ok([self.sectors[0].decode(&detectors[0])?, self.sectors[1].decode(&detectors[1])?])
    }
}

pub fn decode_window(models: &[DecodingModel; 2], detectors: &[BitVec; 2], cfg: &BpConfig) -> Result<[DecodeOutcome; 2], DecodeError> {
    WindowDecoder::new(models, *cfg)?.decode(detectors)
}

/// True if the predicted logical flips differ from the actual ones in either sector.
pub fn adjudicate(record: &ShotRecord, outcomes: &[DecodeOutcome; 2], code: &CssCode) -> bool {
    let truth = true_logical_flips(record, code);
    (0..2).any(|s| truth[s] != outcomes[s].predicted_logical_flips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_cycle, repeat_window, Protocol, ScheduleSpec};
    use crate::code::steane_code;
    use crate::faultmodel::build_models;
    use crate::sim::NoiseParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn steane_models(p: f64) -> [DecodingModel; 2] {
        let code = steane_code();
        let w = repeat_window(build_cycle(&code, &ScheduleSpec::Sequential, Protocol::Plain).unwrap(), 2).unwrap();
        build_models(&w, &code, &NoiseParams::uniform(p)).unwrap()
    }

    /// Random sparse model: every column has 1 to 3 detectors.
    pub(crate) fn random_model(n_det: usize, n_faults: usize, p: f64, seed: u64) -> DecodingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut columns = Vec::new();
        for _ in 0..n_faults {
            let w = rng.gen_range(1..=3);
            let mut c: Vec<u32> = (0..w).map(|_| rng.gen_range(0..n_det as u32)).collect();
            c.sort_unstable();
            c.dedup();
            columns.push(c);
        }
        let obs_columns: Vec<Vec<u32>> = (0..n_faults).map(|_| if rng.gen_bool(0.3) { vec![0] } else { vec![] }).collect();
        let mut rows = vec![Vec::new(); n_det];
        for (j, c) in columns.iter().enumerate() {
            for &d in c {
                rows[d as usize].push(j as u32);
            }
        }
        DecodingModel {
            sector: Sector::ZChecks,
            n_cycles: n_det - 1,
            n_sector_checks: 1,
            h: BitMatrix::from_entries(n_det, n_faults, columns.iter().enumerate().flat_map(|(j, c)| c.iter().map(move |&d| (d as usize, j)))),
            o: BitMatrix::from_entries(1, n_faults, obs_columns.iter().enumerate().flat_map(|(j, c)| c.iter().map(move |&d| (d as usize, j)))),
            priors: vec![p; n_faults],
            columns,
            rows,
            obs_columns,
        }
    }

    #[test]
    fn zero_syndrome_converges_immediately() {
        let [xm, _] = steane_models(0.01);
        let out = bp_decode(&xm, &BitVec::zeros(xm.n_detectors()), &BpConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
        assert!(out.correction.is_zero());
    }

    #[test]
    fn dominant_single_fault_is_recovered() {
        let [_, mut zm] = steane_models(0.001);
        for j in [0, 5, zm.n_faults() / 2] {
            let saved = zm.priors[j];
            zm.priors[j] = 0.2;
            let s = zm.syndrome_of(&BitVec::from_support(zm.n_faults(), [j]));
            let out = bp_decode(&zm, &s, &BpConfig::default()).unwrap();
            assert!(out.converged);
            assert_eq!(zm.syndrome_of(&out.correction), s);
            assert_eq!(out.correction.support().collect::<Vec<_>>(), vec![j]);
            zm.priors[j] = saved;
        }
    }

    #[test]
    fn min_sum_variant_decodes_single_faults() {
        let [_, zm] = steane_models(0.01);
        let cfg = BpConfig {
            variant: BpVariant::MinSum { scale: 0.625 },
            ..BpConfig::default()
        };
        let dec = SectorDecoder::new(&zm, cfg).unwrap();
        for j in 0..zm.n_faults() {
            let s = zm.syndrome_of(&BitVec::from_support(zm.n_faults(), [j]));
            let out = dec.decode(&s).unwrap();
            assert_eq!(zm.syndrome_of(&out.correction), s);
        }
    }

    #[test]
    fn osd_reproduces_random_syndromes() {
        let m = random_model(20, 40, 0.02, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let e = BitVec::from_bools(&(0..40).map(|_| rng.gen_bool(0.1)).collect::<Vec<_>>());
            let s = m.syndrome_of(&e);
            let post: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
            for order in [0, 1, 7] {
                let c = osd_decode(&m, &s, &post, order).unwrap();
                assert_eq!(m.syndrome_of(&c), s);
            }
        }
    }

    #[test]
    fn osd_rejects_inconsistent_syndrome() {
        // two detectors, one fault covering both: {1,0} is unreachable
        let mut m = random_model(2, 1, 0.1, 0);
        m.columns = vec![vec![0, 1]];
        m.rows = vec![vec![0], vec![0]];
        let s = BitVec::from_support(2, [0]);
        assert_eq!(osd_decode(&m, &s, &[1.0], 3), Err(DecodeError::Inconsistent { sector: Sector::ZChecks }));
    }

    #[test]
    fn higher_order_never_costs_more() {
        let m = random_model(20, 40, 0.02, 5);
        let w = ((1.0 - 0.02) / 0.02f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let e = BitVec::from_bools(&(0..40).map(|_| rng.gen_bool(0.08)).collect::<Vec<_>>());
            let s = m.syndrome_of(&e);
            let post: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..6.0)).collect();
            let c0 = osd_decode(&m, &s, &post, 0).unwrap();
            let c7 = osd_decode(&m, &s, &post, 7).unwrap();
            assert!(c7.weight() as f64 * w <= c0.weight() as f64 * w + 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(BpConfig::default().validate().is_ok());
        assert!(BpConfig { max_iters: 0, ..BpConfig::default() }.validate().is_err());
        assert!(BpConfig { llr_clamp: 0.0, ..BpConfig::default() }.validate().is_err());
        assert_eq!("min-sum".parse::<BpVariant>().unwrap(), BpVariant::MinSum { scale: 0.625 });
    }
}
