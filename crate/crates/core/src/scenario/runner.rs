use std::time::Instant;

use faer::c64;
use serde_json::json;

use crate::biorthogonal::{build_biorthogonal, minimality, BiorthogonalSystem};
use crate::bridge::{assemble_small_norm, BridgeAssembly};
use crate::error::{LabError, Result};
use crate::halfspace::{invariance_residual, preannihilator, HalfSpaceRep};
use crate::linalg;
use crate::operator::{make_operator, operator_norm, resolvent_solve_detailed, OperatorRep, SolveMethod};
use crate::perturbation::{defect_one_construction, small_norm_rank_one, DefectOneOutcome};
use crate::resolvent::{
    build_family, growth_diagnostic, select_estar, wstar_decay_diagnostic, ResolventFamily, GROWTH_FACTOR,
};
use crate::structure::{dense_range_chain, eigen_halfspace, eigenpairs, orbit_minimality, partition, riesz_projection};
use crate::vector::CVector;

use super::config::{Pipeline, ScenarioConfig};
use super::report::{FlagSource, ReportBuilder, VerificationReport};
use super::zoo;

/// Coordinates probed by the weak-* decay surrogate.
const DECAY_PROBE: usize = 16;

fn timed<T>(b: &mut ReportBuilder, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    b.timing(stage, start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Runs the selected pipeline. Only an invalid config is an error; every
/// pipeline failure ends up in the report with `pass = false`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut b = ReportBuilder::new();
    b.object("config", cfg);
    if let Err(e) = run_pipeline(cfg, &mut b) {
        b.fail(e.to_string());
        if let LabError::BranchUnsupported { partial, .. } = &e {
            record_partial_bridge(&mut b, partial);
        }
    }
    Ok(b.finish(&cfg.name))
}

fn run_pipeline(cfg: &ScenarioConfig, b: &mut ReportBuilder) -> Result<()> {
    let t = timed(b, "operator", || make_operator(&cfg.operator, cfg.dim))?;
    b.object("operator", json!({ "structure": t.structure().name(), "dim": t.dim() }));
    match cfg.pipeline {
        Pipeline::DefectOne => defect_one(cfg, &t, b),
        Pipeline::SmallNorm => small_norm(cfg, &t, b),
        Pipeline::Bridge => bridge(cfg, &t, b),
        Pipeline::Structure => structure(cfg, &t, b),
    }
}

/// The boundary point must not be an eigenvalue; known facts win over the
/// numerical test on the truncation.
fn check_boundary_point(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<()> {
    let lambda = cfg.lambda.value();
    match zoo::on_spectrum_boundary(&cfg.operator, lambda) {
        Some(on) => b.flag(
            "boundary_point_in_boundary_spectrum",
            on,
            FlagSource::Structural,
            format!("lambda = {lambda}"),
        ),
        None => b.flag(
            "boundary_point_in_boundary_spectrum",
            true,
            FlagSource::Assumed,
            "no structural fact for this operator",
        ),
    }
    let (is_eig, source, detail) = match zoo::is_eigenvalue(&cfg.operator, lambda) {
        Some(e) => (e, FlagSource::Structural, "known point spectrum".to_string()),
        None => match resolvent_solve_detailed(t, lambda, &CVector::unit(t.dim(), 0), SolveMethod::Auto) {
            Ok(sol) => (
                false,
                FlagSource::Numerical,
                format!("sigma_min(lambda - T) ~ {:e}", sol.sigma_min),
            ),
            Err(LabError::SingularResolvent { sigma_min, .. }) => (
                true,
                FlagSource::Numerical,
                format!("sigma_min(lambda - T) ~ {sigma_min:e}"),
            ),
            Err(e) => return Err(e),
        },
    };
    b.flag("boundary_point_not_eigenvalue", !is_eig, source, detail);
    if is_eig {
        return Err(LabError::HypothesisFailed(format!(
            "boundary point {lambda} is an eigenvalue of T"
        )));
    }
    Ok(())
}

fn family_stage(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<ResolventFamily> {
    check_boundary_point(cfg, t, b)?;
    let lambda = cfg.lambda.value();
    let schedule = cfg.schedule();
    let n = cfg.schedule.count;
    let candidates = cfg.candidates();
    let vectors: Vec<CVector> = candidates.iter().map(|c| c.vector(t.dim())).collect::<Result<_>>()?;
    let e_star = if vectors.len() > 1 {
        let choice = timed(b, "estar_search", || {
            select_estar(t, lambda, &schedule, n, &vectors, GROWTH_FACTOR)
        })?;
        let labels: Vec<String> = candidates.iter().map(|c| c.label()).collect();
        b.object(
            "estar_search",
            json!({
                "candidates": labels,
                "last_norms": choice.last_norms,
                "growth": choice.growth,
                "chosen": labels[choice.index],
            }),
        );
        choice.e_star
    } else {
        b.object(
            "estar_search",
            json!({ "candidates": [candidates[0].label()], "chosen": candidates[0].label() }),
        );
        vectors.into_iter().next().expect("one candidate")
    };
    let fam = timed(b, "family", || build_family(t, lambda, &schedule, &e_star, n))?;
    let growth = growth_diagnostic(&fam, GROWTH_FACTOR)?;
    b.flag(
        "resolvent_growth",
        growth.growing,
        FlagSource::Numerical,
        format!("last/first = {:.4}, log-slope = {:.5}", growth.ratio, growth.rate),
    );
    let decay = wstar_decay_diagnostic(&fam, DECAY_PROBE);
    b.flag(
        "wstar_decay_trend",
        decay.decaying,
        FlagSource::Numerical,
        "coordinatewise surrogate; does not gate",
    );
    let lambdas: Vec<[f64; 2]> = fam.lambdas.iter().map(|l| [l.re, l.im]).collect();
    b.object(
        "family",
        json!({
            "lambdas": lambdas,
            "norms": fam.norms,
            "log_norms": fam.log_norms(),
            "inveq_residuals": fam.inveq_residuals,
            "growth": growth,
            "wstar_decay": decay,
        }),
    );
    b.residual("inveq", fam.max_inveq_residual(), cfg.tolerances.inveq);
    Ok(fam)
}

fn selection_stage(cfg: &ScenarioConfig, fam: &ResolventFamily, b: &mut ReportBuilder) -> Result<BiorthogonalSystem> {
    let bio = timed(b, "biorthogonal", || {
        build_biorthogonal(fam, cfg.selection.kappa_max, cfg.selection.gamma)
    })?;
    b.object(
        "biorthogonal",
        json!({
            "indices": bio.indices,
            "gram_cond": bio.gram_cond,
            "m_bound": bio.m_bound,
            "minimality": minimality(&bio),
        }),
    );
    b.residual(
        "biorthogonality",
        bio.pairing_residual(),
        cfg.tolerances.biorthogonality,
    );
    Ok(bio)
}

fn halfspace_summary(z: &HalfSpaceRep) -> serde_json::Value {
    json!({
        "dim": z.dim,
        "codim_in_truncation": z.codim_in_truncation,
        "halfspace_proxy": z.halfspace_proxy_flag,
        "annihilation_residual": z.annihilation_residual(),
    })
}

fn defect_one(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<()> {
    let fam = family_stage(cfg, t, b)?;
    let bio = selection_stage(cfg, &fam, b)?;
    let sub = fam.subfamily(&bio.indices);
    let z = timed(b, "halfspace", || preannihilator(&bio.x_stars, t.dim()))?;
    b.object("halfspace", halfspace_summary(&z));
    b.flag(
        "halfspace_proxy",
        z.halfspace_proxy_flag,
        FlagSource::Numerical,
        "few defining functionals stand in for infinite codimension",
    );
    let tol = &cfg.tolerances;
    match timed(b, "construction", || defect_one_construction(t, &sub, &z))? {
        DefectOneOutcome::AlreadyInvariant {
            max_estar_on_z,
            invariance_residual,
        } => {
            b.object(
                "outcome",
                json!({ "branch": "already_invariant", "max_estar_on_z": max_estar_on_z }),
            );
            b.residual("invariance", invariance_residual, tol.invariance);
        }
        DefectOneOutcome::Perturbed(data) => {
            b.object(
                "outcome",
                json!({
                    "branch": "perturbed",
                    "z0_index": data.z0_index,
                    "perturbation_norm": data.perturbation.norm,
                    "defect": data.defect,
                    "defect_gap": data.defect.gap(),
                }),
            );
            b.residual("four_term", data.four_term_residual, tol.four_term);
            b.residual("precondition", data.precondition_residual, tol.precondition);
            b.residual("invariance", data.invariance_residual, tol.invariance);
            b.residual("defect", data.defect.defect as f64, 1.0);
        }
    }
    Ok(())
}

fn small_norm(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<()> {
    let fam = family_stage(cfg, t, b)?;
    let bio = selection_stage(cfg, &fam, b)?;
    let out = timed(b, "construction", || small_norm_rank_one(t, &fam, &bio, cfg.epsilon))?;
    b.object(
        "perturbation",
        json!({
            "indices": out.indices,
            "norm": out.perturbation.norm,
            "epsilon": cfg.epsilon,
            "tail_sum": out.tail_sum,
            "budget_bound": out.budget_bound,
            "dual_sum_bound": out.dual_sum_bound,
            "gram_cond": out.duals.gram_cond,
            "m_bound": out.duals.m_bound,
        }),
    );
    b.object("halfspace", halfspace_summary(&out.halfspace));
    let tol = &cfg.tolerances;
    // the subset may differ from the greedy selection, so recheck its duals
    b.residual(
        "biorthogonality",
        out.duals.pairing_residual().max(bio.pairing_residual()),
        tol.biorthogonality,
    );
    b.residual("unit_pairing", out.unit_pairing_residual, tol.unit_pairing);
    b.residual("invariance", out.invariance_residual, tol.invariance);
    b.residual("norm_budget", out.perturbation.norm, cfg.epsilon);
    Ok(())
}

fn record_bridge(b: &mut ReportBuilder, a: &BridgeAssembly) {
    let kr = &a.kernel_range;
    b.object(
        "bridge",
        json!({
            "certificate": a.certificate,
            "removed_rows": kr.removed_rows,
            "g_rank": a.g.rank_bound(),
        }),
    );
    let c = &a.certificate;
    let (holds, detail) = match c.quasinilpotent {
        crate::bridge::QuasinilpotentEvidence::Structural => (true, "nilpotent by construction".to_string()),
        crate::bridge::QuasinilpotentEvidence::Numerical { relative_radius } => {
            (true, format!("spectral radius / norm = {relative_radius:e}"))
        }
    };
    let source = match c.quasinilpotent {
        crate::bridge::QuasinilpotentEvidence::Structural => FlagSource::Structural,
        _ => FlagSource::Numerical,
    };
    b.flag("quasinilpotent", holds, source, detail);
    b.flag(
        "countable_spectrum",
        true,
        FlagSource::Assumed,
        "compact perturbations of quasinilpotent operators have countable spectrum",
    );
}

fn record_partial_bridge(b: &mut ReportBuilder, a: &BridgeAssembly) {
    record_bridge(b, a);
    if let Some(s) = a.certificate.injectivity_sigma_min {
        b.flag(
            "injective_after_bridge",
            s > a.kernel_range.tol_rank * a.alpha,
            FlagSource::Numerical,
            format!("sigma_min(T + alpha G) = {s:e}"),
        );
    }
}

fn bridge(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<()> {
    let mut opts = cfg.bridge.options.clone();
    if cfg.bridge.row_section && opts.boundary_rows.is_empty() {
        opts.boundary_rows = cfg.operator.truncation_boundary_rows(cfg.dim);
    }
    let a = timed(b, "bridge", || assemble_small_norm(t, cfg.epsilon, &opts))?;
    record_bridge(b, &a);
    let c = &a.certificate;
    if let Some(s) = c.dense_range_sigma_min {
        b.flag(
            "dense_range_after_bridge",
            s > a.kernel_range.tol_rank * a.alpha,
            FlagSource::Numerical,
            format!("sigma_min of the adjoint section = {s:e}"),
        );
    }
    let tol = &cfg.tolerances;
    b.residual("alpha_g_budget", c.alpha_g_norm, cfg.epsilon / 2.0);
    b.residual("norm_budget", c.total_norm, cfg.epsilon);
    let rank_limit = c.n.min(c.m) + 1;
    b.residual(
        "rank",
        c.numerical_rank.unwrap_or(c.rank_bound) as f64,
        rank_limit as f64,
    );
    if let Some(f0) = &a.f0 {
        b.object(
            "f0",
            json!({
                "indices": f0.indices,
                "norm": f0.perturbation.norm,
                "budget_bound": f0.budget_bound,
                "gram_cond": f0.duals.gram_cond,
            }),
        );
        b.residual("f0_budget", f0.perturbation.norm, cfg.epsilon / 2.0);
        b.residual("biorthogonality", f0.duals.pairing_residual(), tol.biorthogonality);
        b.residual("unit_pairing", f0.unit_pairing_residual, tol.unit_pairing);
        b.residual("invariance", f0.invariance_residual, tol.invariance);
    }
    Ok(())
}

fn structure(cfg: &ScenarioConfig, t: &OperatorRep, b: &mut ReportBuilder) -> Result<()> {
    let st = &cfg.structure;
    let tol = &cfg.tolerances;
    let d = t.dim();

    let z = CVector::unit(d, st.orbit_start - 1);
    let horizon = st.orbit_horizon.unwrap_or(d / 2);
    let orbit = timed(b, "orbit", || orbit_minimality(t, &z, horizon, tol.orbit_delta))?;
    b.flag(
        "orbit_minimal",
        orbit.minimal,
        FlagSource::Numerical,
        match orbit.failing_index {
            Some(p) => format!("T^{p} z lies in the span of the other orbit vectors"),
            None => format!("orbit of e_{} up to K = {horizon}", st.orbit_start),
        },
    );
    if let Some(r) = orbit.refinement_residual {
        b.residual("orbit_refinement", r, tol.orbit_delta);
    }
    b.object("orbit", &orbit);

    match timed(b, "range_chain", || {
        dense_range_chain(t, st.chain_max_steps.unwrap_or(d))
    }) {
        Ok(chain) => b.object(
            "range_chain",
            json!({
                "stable_at": chain.stable_at,
                "codims": chain.codims,
                "degenerate_zero_space": chain.degenerate_zero_space,
                "adjoint_sigma_min": chain.adjoint_sigma_min,
                "adjoint_injective": chain.adjoint_injective,
            }),
        ),
        Err(LabError::NoStabilization {
            steps,
            codims,
            truncation_artifact,
        }) => b.object(
            "range_chain",
            json!({
                "stable_at": null,
                "steps": steps,
                "codims": codims,
                "truncation_artifact": truncation_artifact,
            }),
        ),
        Err(e) => return Err(e),
    }

    if !st.eigen_selected.is_empty() {
        let mut pairs = timed(b, "eigen", || eigenpairs(t))?;
        pairs.sort_by(|x, y| x.0.re.total_cmp(&y.0.re).then(x.0.im.total_cmp(&y.0.im)));
        let (selected, withheld): (Vec<_>, Vec<_>) = pairs
            .into_iter()
            .enumerate()
            .partition(|(i, _)| st.eigen_selected.contains(i));
        let selected: Vec<(c64, CVector)> = selected.into_iter().map(|(_, p)| p).collect();
        let withheld: Vec<(c64, CVector)> = withheld.into_iter().map(|(_, p)| p).collect();
        let eh = timed(b, "eigen", || eigen_halfspace(t, &selected, &withheld))?;
        b.object(
            "eigen_halfspace",
            json!({
                "dim": eh.halfspace.dim,
                "defect": eh.defect,
                "max_cross_pairing": eh.max_cross_pairing,
            }),
        );
        b.residual(
            "eigen_invariance",
            invariance_residual(t, &eh.halfspace),
            tol.eigen_invariance,
        );
        b.residual("eigen_defect", eh.defect.defect as f64, 0.0);
    }

    if !st.contours.is_empty() {
        let t_norm = operator_norm(t);
        let mut projections = Vec::with_capacity(st.contours.len());
        for c in &st.contours {
            let p = timed(b, "riesz", || riesz_projection(t, c.center.value(), c.radius, st.nodes))?;
            projections.push(p);
        }
        if st.covering {
            let r = timed(b, "riesz", || partition(&mut projections))?;
            b.residual("riesz_partition", r, tol.riesz);
        }
        let mut summaries = Vec::with_capacity(projections.len());
        for (i, p) in projections.iter().enumerate() {
            let p_norm = linalg::spectral_norm(p.p.matrix())?.max(f64::MIN_POSITIVE);
            let idem = p.residuals.idempotency / p_norm;
            let comm = p.residuals.commutation / (t_norm.max(f64::MIN_POSITIVE) * p_norm);
            b.residual(&format!("riesz_idempotency_{i}"), idem, tol.riesz);
            b.residual(&format!("riesz_commutation_{i}"), comm, tol.riesz);
            summaries.push(json!({
                "center": [p.center.re, p.center.im],
                "radius": p.radius,
                "nodes": p.nodes,
                "rank": linalg::rank_above(&linalg::singular_values(p.p.matrix())?, 0.5),
                "last_change": p.last_change,
            }));
        }
        b.object("riesz", summaries);
    }
    Ok(())
}
