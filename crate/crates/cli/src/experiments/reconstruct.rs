//! reconstruct: phase-only inversion and the ExactCGO gap study.

use degenlab_core::discretization::Potentials;
use degenlab_core::reconstruct::{
    cgo_gap_study, phase_only_samples, reconstruction_errors, recover_v_and_q, recover_v_fixed_q, round_trip_residual, FrequencyGrid, Geometry, Reconstruction, SampleMode,
};

use super::{num, Comparison, Ctx, Res};
use crate::config::ReconstructSweep;

fn bandwidth(p1: &Potentials, p2: &Potentials) -> f64 {
    [&p1.v, &p1.q, &p2.v, &p2.q].iter().map(|f| f.bandwidth()).fold(0.0, f64::max)
}

fn grid_rows(rec: &Reconstruction) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let dim = rec.geometry.dim;
    let n = rec.axes[0].len();
    let mut v = vec![];
    for (i, val) in rec.v.iter().enumerate() {
        let mut row = vec![];
        let mut rest = i;
        let mut idx = vec![0; dim];
        for j in (0..dim).rev() {
            idx[j] = rest % n;
            rest /= n;
        }
        row.extend((0..dim).map(|j| num(rec.axes[j][idx[j]])));
        row.push(num(*val));
        v.push(row);
    }
    let mut q = vec![];
    if let Some(qs) = &rec.q {
        for (i, val) in qs.iter().enumerate() {
            let mut rest = i;
            let mut row = vec![String::new(); dim - 1];
            for j in (0..dim - 1).rev() {
                row[j] = num(rec.axes[j][rest % n]);
                rest /= n;
            }
            row.push(num(*val));
            q.push(row);
        }
    }
    (v, q)
}

pub(super) fn reconstruct(ctx: &mut Ctx, r: &ReconstructSweep) -> Res<()> {
    let (p1, p2) = (ctx.potentials(0), ctx.potentials(1));
    let w = ctx.cfg.weight;
    let spec = &ctx.cfg.mesh;
    let dim = spec.lengths.len();
    if r.mode == SampleMode::PhaseOnly {
        let mut lo = spec.horizontal_origin.clone().unwrap_or_else(|| vec![0.0; dim - 1]);
        lo.push(0.0);
        let geom = Geometry::new(&lo, &spec.lengths).map_err(|e| ctx.fail(e))?;
        let b = r.bandwidth.unwrap_or_else(|| bandwidth(&p1, &p2));
        let grid = FrequencyGrid::new(&geom, w.s, b, r.half).map_err(|e| ctx.fail(e))?;
        let samples = phase_only_samples(&geom, w.s, &p1, &p2, &grid).map_err(|e| ctx.fail(e))?;
        let rec = if r.joint { recover_v_and_q(&samples, r.n_out, r.leakage) } else { recover_v_fixed_q(&samples, r.n_out) }.map_err(|e| ctx.fail(e))?;
        let err = reconstruction_errors(&rec, &p1, &p2);
        let labels = ["k1", "k2", "k3"];
        let mut header: Vec<&str> = labels[..dim].to_vec();
        header.extend(["re", "im"]);
        let rows = samples
            .values
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let k = grid.point(i);
                let mut row: Vec<String> = k[..dim].iter().map(|x| num(*x)).collect();
                row.extend([num(t.re), num(t.im)]);
                row
            })
            .collect();
        ctx.csv("samples.csv", &header, rows)?;
        let (vrows, qrows) = grid_rows(&rec);
        let xs = ["x1", "x2", "x3"];
        let mut vh: Vec<&str> = xs[..dim].to_vec();
        vh.push("delta_v");
        ctx.csv("v.csv", &vh, vrows)?;
        if rec.q.is_some() {
            let mut qh: Vec<&str> = xs[..dim - 1].to_vec();
            qh.push("delta_q");
            ctx.csv("q.csv", &qh, qrows)?;
        }
        ctx.metric("bandwidth", b);
        ctx.metric("hermitian_defect", samples.hermitian_defect() / samples.max_abs().max(f64::MIN_POSITIVE));
        ctx.metric("round_trip_residual", round_trip_residual(&samples, &rec));
        ctx.metric("imag_residue", rec.imag_residue);
        ctx.metric("v_max_abs_error", err.v_max_abs);
        if let Some(l) = rec.leakage {
            ctx.metric("leakage", l);
        }
        match r.max_v_error {
            Some(m) => ctx.check("v_rel_l2", err.v_rel_l2, Comparison::Below, m),
            None => ctx.metric("v_rel_l2", err.v_rel_l2),
        }
        if let Some(q) = err.q_rel_l2 {
            match r.max_q_error {
                Some(m) => ctx.check("q_rel_l2", q, Comparison::Below, m),
                None => ctx.metric("q_rel_l2", q),
            }
        }
    }
    if let Some(g) = &r.gap {
        let mesh = ctx.mesh()?;
        let study = cgo_gap_study(&mesh, &w, &p1, &p2, &g.k, &g.taus).map_err(|e| ctx.fail(e))?;
        let rows = study.taus.iter().zip(&study.exact).zip(&study.gaps).map(|((t, e), gap)| vec![num(*t), num(e.re), num(e.im), num(*gap)]).collect();
        ctx.csv("gap.csv", &["tau", "exact_re", "exact_im", "relative_gap"], rows)?;
        ctx.metric("phase_only_re", study.phase.re);
        ctx.metric("phase_only_im", study.phase.im);
        ctx.metric("gap_slope", study.slope);
        let step = study.gaps.windows(2).map(|p| p[1] / p[0]).fold(0.0, f64::max);
        ctx.check("gap_max_step_ratio", step, Comparison::AtMost, 1.0 + g.slack);
        ctx.check("gap_last_over_first", study.gaps.last().unwrap() / study.gaps[0], Comparison::Below, 1.0);
    }
    Ok(())
}
