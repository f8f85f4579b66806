//! forward, dtn, alessandrini, runge.

use std::sync::Arc;

use degenlab_core::discretization::{assemble, Point, ScalarField};
use degenlab_core::dtn::{alessandrini_residual, compute_dtn, symmetry_defect};
use degenlab_core::forward::{manufactured_convergence, nearest_eigenvalue, MixedData, Solver};
use degenlab_core::io::{write_container, write_field_csv, Kind};
use degenlab_core::linalg::hermitian_generalized_eigen;
use degenlab_core::runge::{build_dictionary, runge_study, simultaneous_fit, BulkTopology, Subdomain};
use degenlab_core::{Complex64 as C, Error};

use super::{num, Comparison, Ctx, Res};
use crate::cache_key;
use crate::config::{AlessandriniSweep, DtnSweep, ForwardSweep, RungeSweep};

fn real(f: &ScalarField) -> impl Fn(&Point) -> C + Sync {
    let f = f.compile();
    move |p: &Point| C::new(f.eval(p), 0.0)
}

pub(super) fn forward(ctx: &mut Ctx, f: &ForwardSweep) -> Res<()> {
    let w = ctx.cfg.weight;
    let pots = ctx.potentials(0);
    if let Some(g) = &f.dirichlet {
        let mesh = ctx.mesh()?;
        let asm = assemble(&mesh, &w, &pots, f.lambda).map_err(|e| ctx.fail(e))?;
        let data = MixedData::from_functions(&asm, &real(g), None, None, None);
        let sol = Solver::new(&asm).and_then(|s| s.solve(&data)).map_err(|e| ctx.fail(e))?;
        ctx.metric("residual", sol.residual);
        ctx.metric("max_abs_u", sol.u.iter().map(|v| v.norm()).fold(0.0, f64::max));
        let pts = mesh.vertices();
        ctx.file("solution.csv", |p| write_field_csv(p, &pts, mesh.dim, &sol.u))?;
        if let Some(r) = &f.reference {
            let r = real(r);
            let err = pts.iter().zip(&sol.u).map(|(p, u)| (u - r(p)).norm()).fold(0.0, f64::max);
            ctx.check("max_reference_error", err, Comparison::AtMost, f.reference_tol);
        }
    }
    if let Some(c) = &f.convergence {
        let study = manufactured_convergence(&ctx.cfg.mesh, w.s, c.v, c.q, c.levels).map_err(|e| ctx.fail(e))?;
        let rows = (0..study.h.len()).map(|i| vec![i.to_string(), num(study.h[i]), study.dofs[i].to_string(), num(study.errors[i])]).collect();
        ctx.csv("convergence.csv", &["level", "h", "dofs", "h1w_error"], rows)?;
        for (i, r) in study.pairwise_rates.iter().enumerate() {
            ctx.metric(format!("rate_{i}"), *r);
        }
        ctx.check("rate", study.rate, Comparison::AtLeast, c.min_rate);
    }
    if let Some(g) = &f.eigen_guard {
        let mesh = ctx.mesh()?;
        let asm = assemble(&mesh, &w, &pots, f.lambda).map_err(|e| ctx.fail(e))?;
        let mu = nearest_eigenvalue(&asm).map_err(|e| ctx.fail(e))?;
        // Dense generalized eigenproblem of the λ = 0 operator on the interior dofs.
        let free = &asm.partition.free;
        let k0 = asm.matrix.add_scaled(&asm.mass, C::new(f.lambda, 0.0)).submatrix(free, free).to_dense();
        let m = asm.mass.submatrix(free, free).to_dense();
        let (vals, _) = hermitian_generalized_eigen(&k0, &m).map_err(|e| ctx.fail(e))?;
        let dense = vals.iter().copied().min_by(|a, b| (a - f.lambda).abs().total_cmp(&(b - f.lambda).abs())).unwrap_or(f64::NAN);
        ctx.metric("nearest_eigenvalue", mu);
        ctx.metric("dense_eigenvalue", dense);
        ctx.check("eigenvalue_rel_error", (mu - dense).abs() / dense.abs().max(1.0), Comparison::AtMost, g.oracle_tol);
        let shifted = assemble(&mesh, &w, &pots, mu).map_err(|e| ctx.fail(e))?;
        let guarded = match Solver::new(&shifted) {
            Err(Error::ZeroIsEigenvalue { .. }) => 1.0,
            Err(e) => return Err(ctx.fail(e)),
            Ok(_) => 0.0,
        };
        ctx.check("guard_triggered", guarded, Comparison::AtLeast, 1.0);
        ctx.csv("eigenvalue.csv", &["lambda", "nearest", "dense"], vec![vec![num(f.lambda), num(mu), num(dense)]])?;
    }
    Ok(())
}

pub(super) fn dtn(ctx: &mut Ctx, d: &DtnSweep) -> Res<()> {
    let mesh = ctx.mesh()?;
    let w = ctx.cfg.weight;
    let sets = if ctx.cfg.potentials.is_empty() { vec![Default::default()] } else { ctx.cfg.potentials.clone() };
    let mut rows = vec![];
    let mut hits = 0;
    for (i, pots) in sets.iter().enumerate() {
        let asm = assemble(&mesh, &w, pots, d.lambda).map_err(|e| ctx.fail(e))?;
        let key = format!("{}-{:016x}", cache_key(&ctx.cfg.mesh, &w, pots), d.lambda.to_bits());
        let (m, hit) = match ctx.cache {
            Some(c) => c.get_or_compute(&key, || compute_dtn(&asm)),
            None => compute_dtn(&asm).map(|m| (m, false)),
        }
        .map_err(|e| ctx.fail(e))?;
        hits += hit as usize;
        let defect = symmetry_defect(&m);
        ctx.file(&format!("dtn_{i}.bin"), |p| write_container(p, Kind::DtN, &m.encode()))?;
        rows.push(vec![i.to_string(), m.dim().to_string(), num(defect)]);
        ctx.check(format!("symmetry_defect_{i}"), defect, Comparison::Below, d.max_defect);
    }
    if hits > 0 {
        ctx.note(format!("{hits} DtN matrices loaded from the cache"));
    }
    ctx.csv("dtn.csv", &["case", "sigma2_nodes", "symmetry_defect"], rows)
}

pub(super) fn alessandrini(ctx: &mut Ctx, a: &AlessandriniSweep) -> Res<()> {
    let w = ctx.cfg.weight;
    let (p1, p2) = (ctx.potentials(0), ctx.potentials(1));
    let seed = ctx.cfg.seed;
    let [d1, d2] = a.data.clone().unwrap_or_else(|| [ScalarField::random_smooth(1.0, 6, seed), ScalarField::random_smooth(1.0, 6, seed.wrapping_add(1))]);
    let (g1, g2) = (real(&d1), real(&d2));
    let mut spec = ctx.cfg.mesh.clone();
    let (mut rows, mut rel) = (vec![], vec![]);
    for level in 0..a.levels {
        let mesh = Arc::new(spec.build().map_err(|e| ctx.fail(e))?);
        let asm1 = assemble(&mesh, &w, &p1, a.lambda).map_err(|e| ctx.fail(e))?;
        let asm2 = assemble(&mesh, &w, &p2, a.lambda).map_err(|e| ctx.fail(e))?;
        let nodes = &asm1.partition.sigma2;
        let f1: Vec<C> = nodes.iter().map(|&i| g1(&mesh.vertex(i))).collect();
        let f2: Vec<C> = nodes.iter().map(|&i| g2(&mesh.vertex(i))).collect();
        let r = alessandrini_residual(&asm1, &asm2, &f1, &f2).map_err(|e| ctx.fail(e))?;
        let h = (0..mesh.dim).map(|j| mesh.max_spacing(j)).fold(0.0, f64::max);
        rows.push(vec![level.to_string(), num(h), num(r.lhs.re), num(r.lhs.im), num(r.rhs.re), num(r.rhs.im), num(r.relative)]);
        rel.push(r.relative);
        spec = spec.refined();
    }
    ctx.csv("alessandrini.csv", &["level", "h", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "relative"], rows)?;
    ctx.check("finest_relative", *rel.last().unwrap(), Comparison::Below, a.max_residual);
    let growth = rel.windows(2).map(|p| if p[0] > 0.0 { p[1] / p[0] } else if p[1] > 0.0 { f64::INFINITY } else { 0.0 }).fold(0.0, f64::max);
    if rel.len() > 1 {
        ctx.check("max_growth", growth, Comparison::AtMost, 1.0 + a.slack);
    }
    Ok(())
}

pub(super) fn runge(ctx: &mut Ctx, r: &RungeSweep) -> Res<()> {
    let mesh = ctx.mesh()?;
    let pots = ctx.potentials(0);
    let asm = assemble(&mesh, &ctx.cfg.weight, &pots, r.lambda).map_err(|e| ctx.fail(e))?;
    let sub = Subdomain::centered(&mesh, r.fraction).map_err(|e| ctx.fail(e))?;
    let seed = ctx.cfg.seed;

    // A dictionary member must be reproduced by the unregularized fit.
    let small = build_dictionary(&asm, &sub, r.sizes[0].min(8), r.family, seed).map_err(|e| ctx.fail(e))?;
    let u = small.member(small.len() / 2);
    let t1: Vec<C> = small.sigma1_nodes.iter().map(|&i| u[i]).collect();
    let t2: Vec<C> = sub.nodes.iter().map(|&i| u[i]).collect();
    let fit = simultaneous_fit(&asm, &small, &t1, &t2, Some(0.0), BulkTopology::L2).map_err(|e| ctx.fail(e))?;
    ctx.check("span_error", fit.boundary_error.max(fit.bulk_error), Comparison::AtMost, r.span_tol);

    let study = runge_study(&asm, &sub, r.family, &r.sizes, r.alpha, r.topology, seed).map_err(|e| ctx.fail(e))?;
    let rows = study
        .joint
        .iter()
        .zip(&study.boundary_only)
        .map(|(j, b)| vec![j.n.to_string(), num(j.boundary_error), num(j.bulk_error), num(j.combined_error), num(j.condition), num(b.boundary_error), num(b.bulk_error)])
        .collect();
    ctx.csv("runge.csv", &["n", "boundary_error", "bulk_error", "combined_error", "condition", "boundary_only_boundary", "boundary_only_bulk"], rows)?;
    let e: Vec<f64> = study.joint.iter().map(|j| j.combined_error).collect();
    let increase = e.windows(2).map(|p| (p[1] - p[0]) / e[0].max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    ctx.check("monotone_violation", increase, Comparison::AtMost, 1e-8);
    ctx.check("combined_error", *e.last().unwrap(), Comparison::Below, r.max_combined);
    if study.joint.iter().any(|j| j.ill_conditioned) {
        ctx.note("ill-conditioned dictionary: the regularization dominates the fit");
    }
    Ok(())
}
