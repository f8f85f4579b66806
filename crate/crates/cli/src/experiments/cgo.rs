//! cgo-decay, carleman, traces.

use degenlab_core::cgo::{carleman_sweep, decay_sweep, mu_grid, trace_study, CarlemanField, CarlemanSetup};

use super::{num, Comparison, Ctx, Res};
use crate::config::{CarlemanSweep, CgoSweep, TraceSweep};

const NORMS: [&str; 3] = ["l2w", "h1w", "sigma1"];

pub(super) fn decay(ctx: &mut Ctx, c: &CgoSweep) -> Res<()> {
    let mesh = ctx.mesh()?;
    let pots = ctx.potentials(0);
    let rep = decay_sweep(&mesh, &ctx.cfg.weight, &c.k, &pots, &c.taus, c.mode).map_err(|e| ctx.fail(e))?;
    let rows = rep
        .points
        .iter()
        .map(|p| vec![num(p.tau), num(p.l2w), num(p.h1w), num(p.sigma1), num(p.source_l2w), num(p.source_sigma1), num(p.residual)])
        .collect();
    ctx.csv("decay.csv", &["tau", "l2w", "h1w", "sigma1", "source_l2w", "source_sigma1", "residual"], rows)?;
    for (n, t) in NORMS.iter().zip(rep.targets) {
        ctx.metric(format!("target_{n}"), t);
    }
    match (rep.slopes, c.max_slopes) {
        (Some(sl), Some(max)) => {
            for ((n, s), m) in NORMS.iter().zip(sl).zip(max) {
                ctx.check(format!("slope_{n}"), s, Comparison::AtMost, m);
            }
        }
        (Some(sl), None) => {
            for (n, s) in NORMS.iter().zip(sl) {
                ctx.metric(format!("slope_{n}"), s);
            }
        }
        (None, _) => ctx.note("the CGO source vanishes: the remainder is identically zero"),
    }
    Ok(())
}

pub(super) fn carleman(ctx: &mut Ctx, c: &CarlemanSweep) -> Res<()> {
    let setup = CarlemanSetup { s: ctx.cfg.weight.s, lengths: ctx.cfg.mesh.lengths.clone(), v: c.v, q: c.q };
    let dim = setup.dim();
    let mut rows = vec![];
    for i in 0..c.fields {
        let field = CarlemanField::random(dim, ctx.cfg.seed.wrapping_add(i as u64));
        let rep = carleman_sweep(&field, &setup, &c.taus).map_err(|e| ctx.fail(e))?;
        for p in &rep.points {
            rows.push(vec![i.to_string(), num(p.tau), num(p.lhs), num(p.rhs), p.ratio.map(num).unwrap_or_default()]);
        }
        if let Some(w) = &rep.warning {
            ctx.note(w.clone());
        }
        match rep.slope {
            Some(s) if !rep.skipped => ctx.check(format!("slope_{i}"), s, Comparison::AtMost, c.max_slope),
            Some(s) => ctx.metric(format!("slope_{i}"), s),
            None => ctx.note(format!("field {i}: 0/0 ratio, no slope")),
        }
    }
    ctx.csv("carleman.csv", &["field", "tau", "lhs", "rhs", "ratio"], rows)
}

pub(super) fn traces(ctx: &mut Ctx, t: &TraceSweep) -> Res<()> {
    let coarse = ctx.mesh()?;
    let fine = ctx.cfg.mesh.refined().build().map_err(|e| ctx.fail(e))?;
    let mus = mu_grid(t.mu_min, t.mu_points);
    let s = ctx.cfg.weight.s;
    let mut rows = vec![];
    for &mode in &t.modes {
        let name = serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let a = trace_study(&coarse, mode, s, &t.fields, &mus).map_err(|e| ctx.fail(e))?;
        let b = trace_study(&fine, mode, s, &t.fields, &mus).map_err(|e| ctx.fail(e))?;
        for (level, st) in [(0, &a), (1, &b)] {
            for (f, ratios) in st.ratios.iter().enumerate() {
                for (m, r) in mus.iter().zip(ratios) {
                    rows.push(vec![name.clone(), level.to_string(), f.to_string(), num(*m), num(*r)]);
                }
            }
        }
        ctx.metric(format!("constant_{name}_coarse"), a.constant);
        ctx.metric(format!("constant_{name}_fine"), b.constant);
        ctx.check(format!("variation_{name}"), (b.constant - a.constant).abs() / a.constant, Comparison::Below, t.max_variation);
    }
    ctx.csv("traces.csv", &["mode", "level", "field", "mu", "ratio"], rows)
}
