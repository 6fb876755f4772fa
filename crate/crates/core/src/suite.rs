//! End-to-end experiment driver: Delone generation, metric convergence,
//! partition and Gram certification, strong convergence, cell structure,
//! compression experiments and field profiles, emitted as CSV tables plus
//! a JSON summary.

use std::fs;

use ndarray::Array2;

use crate::cells::{cell_dims, cell_projection, verify_cells, voronoi_cells, CellPartition};
use crate::chabauty::{rho_sequence, Target};
use crate::config::ExperimentConfig;
use crate::delone::{greedy_delone, DeloneSet};
use crate::error::{Error, Result};
use crate::field::{field_axioms_check, norm_profile, section, IdealFamily};
use crate::gram::{gram_lower_bound, gram_upper_bound, strong_convergence};
use crate::io::write_json;
use crate::pou::verify_pou;
use crate::report::{fmt_float, Assertion, Outcome, Report, Table};
use crate::roe::{
    adapted_basis, alpha, alpha_beta_defect, beta, multiplicativity_defect, norm_convergence,
    random_banded, random_banded_grid, truncate_k, BlockRank, GridOperator, StageData,
};
use crate::space::GridFunction;

fn at_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    })
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Runs every experiment in schedule order and writes the tables and the
/// summary into the configured output directory.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let space = config.space.build()?;
    let seed_point = space.point(&config.seeds.greedy)?;
    let hash = config.hash();
    fs::create_dir_all(&config.output_dir)?;

    let n_stages = config.schedule.len();
    let short = n_stages < 2;
    let tol = &config.tolerances;
    let mut assertions: Vec<Assertion> = Vec::new();
    let mut tables: Vec<Table> = Vec::new();

    let sets: Vec<DeloneSet> = at_stage(
        "delone generation",
        config
            .schedule
            .iter()
            .map(|&t| greedy_delone(&space, t, seed_point))
            .collect(),
    )?;

    let mut controlled = true;
    let mut control_detail = String::new();
    for (i, d) in sets.iter().enumerate() {
        let ok = at_stage("control check", d.is_controlled(&config.control))?;
        if !ok && controlled {
            controlled = false;
            control_detail = format!(
                "stage {}: r = {} < F(R) with R = {}",
                i + 1,
                d.packing_radius(),
                d.covering_radius()
            );
        }
    }
    if controlled {
        control_detail = format!("all {n_stages} stages satisfy r >= F(R)");
    }
    assertions.push(Assertion::check("delone.controlled", controlled, control_detail));

    let rho_steps = at_stage("chabauty convergence", rho_sequence(&space, &sets, Target::Space))?;
    let mut chab = Table::new("chabauty.csv", &["n", "rho", "R_cover", "r_pack"]);
    for s in &rho_steps {
        chab.push(vec![
            s.n.to_string(),
            fmt_float(s.rho),
            fmt_float(s.r_cover),
            fmt_float(s.r_pack),
        ]);
    }
    tables.push(chab);
    if short {
        assertions.push(Assertion::skip(
            "chabauty.rho_nonincreasing",
            "schedule has a single stage",
        ));
    } else {
        let mono = rho_steps.windows(2).all(|w| w[1].rho <= w[0].rho + 1e-15);
        assertions.push(Assertion::check(
            "chabauty.rho_nonincreasing",
            mono,
            format!(
                "rho profile {:?}",
                rho_steps.iter().map(|s| s.rho).collect::<Vec<_>>()
            ),
        ));
    }
    let cover_ok = rho_steps
        .iter()
        .all(|s| s.cover_bound.map(|b| b.ok).unwrap_or(true));
    assertions.push(Assertion::check(
        "chabauty.cover_bound",
        cover_ok,
        "R(D_n) <= rho(D_n, X) + step/2 wherever the bound applies".into(),
    ));

    let stages: Vec<StageData> = at_stage(
        "stage assembly",
        sets.iter().map(StageData::build).collect(),
    )?;

    let mut pou_table = Table::new(
        "pou.csv",
        &["n", "r_pack", "R_cover", "row_sum_dev", "min_plateau", "lebesgue", "lebesgue_bound"],
    );
    let mut gram_table = Table::new(
        "gram.csv",
        &["n", "lambda_min", "lower_bound", "norm", "upper_bound", "cond"],
    );
    let mut row_dev = 0.0f64;
    let mut support_dev = 0.0f64;
    let mut plateau_min = f64::INFINITY;
    let mut lebesgue_ok = true;
    let mut gram_lower_ok = true;
    let mut gram_upper_ok = true;
    let mut iso_dev = 0.0f64;
    let mut proj_dev = 0.0f64;
    let mut roundtrip_dev = 0.0f64;

    for (i, stage) in stages.iter().enumerate() {
        let pr = verify_pou(stage.pou());
        row_dev = row_dev.max(pr.max_row_sum_dev);
        support_dev = support_dev.max(pr.max_support_violation);
        plateau_min = plateau_min.min(pr.min_plateau_value);
        lebesgue_ok &= pr.lebesgue_empirical >= pr.lebesgue_bound - 1e-15;
        pou_table.push(vec![
            (i + 1).to_string(),
            fmt_float(stage.pou().packing_radius()),
            fmt_float(stage.pou().covering_radius()),
            fmt_float(pr.max_row_sum_dev),
            fmt_float(pr.min_plateau_value),
            fmt_float(pr.lebesgue_empirical),
            fmt_float(pr.lebesgue_bound),
        ]);

        let g = stage.gram();
        let lower = gram_lower_bound(stage.pou());
        let upper = gram_upper_bound(g);
        let norm = *g.eigvals().last().unwrap();
        gram_lower_ok &= g.lambda_min() >= lower - tol.gram;
        gram_upper_ok &= norm <= upper + tol.gram;
        gram_table.push(vec![
            (i + 1).to_string(),
            fmt_float(g.lambda_min()),
            fmt_float(lower),
            fmt_float(norm),
            fmt_float(upper),
            fmt_float(g.cond()),
        ]);

        iso_dev = iso_dev.max(stage.iso().orthonormality_defect());
        let u = stage.iso().matrix();
        let p = u.dot(&u.t()) * space.weight();
        proj_dev = proj_dev.max(max_abs(&(&p.dot(&p) - &p)));

        for trial in 0..config.beta_alpha_trials {
            let t_seed = config.seeds.rng
                ^ ((i as u64 + 1) << 32)
                ^ (trial as u64 + 1);
            let t = at_stage(
                "beta alpha round trip",
                random_banded(stage.delone(), 2.0 * stage.r_cover(), t_seed),
            )?;
            let back = at_stage(
                "beta alpha round trip",
                beta(stage.iso(), &alpha(stage.iso(), &t)?),
            )?;
            roundtrip_dev = roundtrip_dev.max(max_abs(&(back.matrix() - t.matrix())));
        }
    }
    tables.push(pou_table);
    tables.push(gram_table);

    assertions.push(Assertion::check(
        "pou.row_sums",
        row_dev < tol.pou_row_sum,
        format!("max |sum phi - 1| = {row_dev:e}"),
    ));
    assertions.push(Assertion::check(
        "pou.supports",
        support_dev <= tol.pou_support,
        format!("max support violation = {support_dev:e}"),
    ));
    assertions.push(Assertion::check(
        "pou.plateau",
        plateau_min >= 1.0 - tol.pou_plateau,
        format!("min plateau value = {plateau_min}"),
    ));
    assertions.push(Assertion::check(
        "pou.lebesgue",
        lebesgue_ok,
        "empirical Lebesgue number meets min(5r/12, min(r/4, R)) - step".into(),
    ));
    assertions.push(Assertion::check(
        "gram.lower_bound",
        gram_lower_ok,
        "lambda_min >= min_u mu(B_{r/6}(u)) - tol".into(),
    ));
    assertions.push(Assertion::check(
        "gram.upper_bound",
        gram_upper_ok,
        "|G| <= N_adj^2 max|g_uv| + tol".into(),
    ));
    assertions.push(Assertion::check(
        "isometry.orthonormal",
        iso_dev < tol.isometry,
        format!("max |U*WU - I| = {iso_dev:e}"),
    ));
    assertions.push(Assertion::check(
        "isometry.projector_idempotent",
        proj_dev < tol.projector,
        format!("max |P^2 - P| = {proj_dev:e}"),
    ));
    assertions.push(Assertion::check(
        "roe.beta_alpha_identity",
        roundtrip_dev < tol.beta_alpha,
        format!(
            "max |beta(alpha(T)) - T| = {roundtrip_dev:e} over {} trials per stage",
            config.beta_alpha_trials
        ),
    ));

    let two_pi = 2.0 * std::f64::consts::PI;
    let f = GridFunction::from_fn(space, |p| (two_pi * p.coords()[0] / space.side()).cos());
    let strong_steps = at_stage("strong convergence", strong_convergence(&space, &f, &sets))?;
    let mut strong_table = Table::new("strong.csv", &["n", "R_cover", "error", "bound"]);
    for s in &strong_steps {
        strong_table.push(vec![
            s.n.to_string(),
            fmt_float(s.r_cover),
            fmt_float(s.error),
            fmt_float(s.bound),
        ]);
    }
    tables.push(strong_table);
    if short {
        assertions.push(Assertion::skip(
            "strong.errors_decrease",
            "schedule has a single stage",
        ));
        assertions.push(Assertion::skip(
            "strong.final_error",
            "schedule has a single stage",
        ));
    } else {
        let decreasing = strong_steps.windows(2).all(|w| w[1].error < w[0].error);
        assertions.push(Assertion::check(
            "strong.errors_decrease",
            decreasing,
            format!(
                "errors {:?}",
                strong_steps.iter().map(|s| s.error).collect::<Vec<_>>()
            ),
        ));
        let final_err = strong_steps.last().unwrap().error;
        assertions.push(Assertion::check(
            "strong.final_error",
            final_err < tol.strong_final_rel * f.norm(),
            format!("final error {final_err} vs {} of |f|", tol.strong_final_rel),
        ));
    }
    let bounded = strong_steps
        .iter()
        .all(|s| s.error <= s.bound + tol.strong_slack);
    assertions.push(Assertion::check(
        "strong.modulus_bound",
        bounded,
        "every error within its modulus-of-continuity bound".into(),
    ));

    let coarse_idx = 1.min(n_stages - 1);
    let c: CellPartition = voronoi_cells(&space, &sets[coarse_idx]);
    let cr = verify_cells(&c);
    let partition_exact = c.assign().len() == space.node_count()
        && c.cells().iter().map(|cell| cell.len()).sum::<usize>() == space.node_count();
    assertions.push(Assertion::check(
        "cells.partition",
        partition_exact,
        "every node in exactly one cell".into(),
    ));
    assertions.push(Assertion::check(
        "cells.inner_bound",
        cr.inner_ok,
        "B_{r/2}(u) nodes belong to V_u".into(),
    ));
    assertions.push(Assertion::check(
        "cells.outer_bound",
        cr.outer_ok,
        "every cell node within R + step of its site".into(),
    ));
    assertions.push(Assertion::check(
        "cells.boundary_monotone",
        cr.boundary_monotone,
        "boundary mass nondecreasing in delta".into(),
    ));

    let mut dims_table = Table::new("dims.csv", &["n", "m_min", "m_max"]);
    let mut m_mins = Vec::with_capacity(n_stages);
    for (i, stage) in stages.iter().enumerate() {
        let dims = cell_dims(stage.pou(), &c);
        m_mins.push(dims.m_min);
        dims_table.push(vec![
            (i + 1).to_string(),
            dims.m_min.to_string(),
            dims.m_max.to_string(),
        ]);
    }
    tables.push(dims_table);

    let finest_dims = cell_dims(stages[n_stages - 1].pou(), &c);
    let mut cells_table = Table::new("cells.csv", &["u", "m_u"]);
    for (u, &m_u) in finest_dims.m_u.iter().enumerate() {
        cells_table.push(vec![u.to_string(), m_u.to_string()]);
    }
    tables.push(cells_table);

    if n_stages < 4 {
        assertions.push(Assertion::skip(
            "cells.dims_increase",
            "schedule shorter than four stages",
        ));
    } else {
        let tail = &m_mins[2..];
        let grow = tail.windows(2).all(|w| w[1] > w[0]);
        assertions.push(Assertion::check(
            "cells.dims_increase",
            grow,
            format!("m_min from stage 3 on: {tail:?}"),
        ));
    }

    let mut proj_orth = true;
    let mut proj_detail = String::from("sub-frame bases orthonormal under quadrature");
    for u in 0..c.cells().len() {
        let proj = at_stage(
            "cell projection",
            cell_projection(u, stages[n_stages - 1].pou(), &c, stages[n_stages - 1].gram()),
        )?;
        if proj.is_zero() {
            continue;
        }
        let b = proj.basis();
        let eye: Array2<f64> = Array2::eye(b.ncols());
        let gram_dev = max_abs(&(&(b.t().dot(b) * space.weight()) - &eye));
        if gram_dev >= tol.isometry {
            proj_orth = false;
            proj_detail = format!("cell {u}: basis Gram deviation {gram_dev:e}");
        }
    }
    assertions.push(Assertion::check(
        "cells.projection_orthonormal",
        proj_orth,
        proj_detail,
    ));

    if short {
        for name in [
            "roe.reconstruction",
            "roe.reconstruction_monotone",
            "roe.multiplicativity",
            "roe.norm_identity",
            "roe.norm_final_gap",
            "field.contraction",
            "field.continuity",
            "field.ideal_tail",
            "field.faithful",
            "field.product_defect",
        ] {
            assertions.push(Assertion::skip(name, "schedule too short for convergence experiments"));
        }
    } else {
        let b = at_stage("block rank", BlockRank::new(&c, config.block_rank))?;
        let last = &stages[n_stages - 1];
        let prep = at_stage(
            "adapted basis",
            adapted_basis(last.pou(), &c, last.gram(), config.block_rank),
        )?;
        let t_in = at_stage(
            "reconstruction input",
            prep.compress(&random_banded_grid(&space, config.band, config.seeds.rng)?),
        )?
        .normalized();

        let defect_rows = at_stage(
            "reconstruction table",
            alpha_beta_defect(&stages, &t_in, &c, &b),
        )?;
        let mut defect_table = Table::new("roe_defect.csv", &["n", "R_cover", "value"]);
        let mut gap_table = Table::new("roe_gap.csv", &["n", "R_cover", "value"]);
        for row in &defect_rows {
            defect_table.push(vec![
                row.n.to_string(),
                fmt_float(row.r_cover),
                fmt_float(row.defect),
            ]);
            gap_table.push(vec![
                row.n.to_string(),
                fmt_float(row.r_cover),
                fmt_float(row.input_gap),
            ]);
        }
        tables.push(defect_table);
        tables.push(gap_table);

        let fine_ok = defect_rows
            .iter()
            .filter(|r| r.m_min > config.block_rank)
            .all(|r| r.defect < tol.reconstruction);
        assertions.push(Assertion::check(
            "roe.reconstruction",
            fine_ok,
            format!(
                "defects {:?} for m_min {:?}",
                defect_rows.iter().map(|r| r.defect).collect::<Vec<_>>(),
                defect_rows.iter().map(|r| r.m_min).collect::<Vec<_>>()
            ),
        ));
        let prefix: Vec<&_> = defect_rows
            .iter()
            .take_while(|r| r.m_min <= config.block_rank)
            .collect();
        let mono = prefix.windows(2).all(|w| w[1].defect <= w[0].defect + 1e-12);
        assertions.push(Assertion::check(
            "roe.reconstruction_monotone",
            mono,
            format!("{} coarse stages weakly decreasing", prefix.len()),
        ));

        let r_in = at_stage(
            "multiplicativity input",
            prep.compress(&random_banded_grid(&space, config.band, config.seeds.rng + 1)?),
        )?
        .normalized();
        let s_in = at_stage(
            "multiplicativity input",
            prep.compress(&random_banded_grid(&space, config.band, config.seeds.rng + 2)?),
        )?
        .normalized();
        let mult_rows = at_stage(
            "multiplicativity table",
            multiplicativity_defect(&stages, &r_in, &s_in),
        )?;
        let mut mult_table = Table::new("roe_mult.csv", &["n", "R_cover", "value"]);
        for row in &mult_rows {
            mult_table.push(vec![
                row.n.to_string(),
                fmt_float(row.r_cover),
                fmt_float(row.defect),
            ]);
        }
        tables.push(mult_table);
        let mult_final = mult_rows.last().unwrap().defect;
        assertions.push(Assertion::check(
            "roe.multiplicativity",
            mult_final < tol.mult_final,
            format!("final defect {mult_final:e}"),
        ));

        let full_rank = at_stage("norm input", BlockRank::new(&c, c.min_cell_size()))?;
        let s_mult = at_stage(
            "norm input",
            truncate_k(&GridOperator::multiplication(&f), &c, &full_rank),
        )?;
        let norm_table_data = at_stage("norm table", norm_convergence(&stages, &s_mult))?;
        let mut norm_table = Table::new("roe_norm.csv", &["n", "R_cover", "value"]);
        for row in &norm_table_data.rows {
            norm_table.push(vec![
                row.n.to_string(),
                fmt_float(row.r_cover),
                fmt_float(row.value),
            ]);
        }
        tables.push(norm_table);
        let identity_dev = norm_table_data
            .rows
            .iter()
            .fold(0.0f64, |a, r| a.max(r.identity_dev));
        assertions.push(Assertion::check(
            "roe.norm_identity",
            identity_dev < tol.norm_identity,
            format!("max | |beta(S)| - |PSP| | = {identity_dev:e}"),
        ));
        assertions.push(Assertion::check(
            "roe.norm_final_gap",
            norm_table_data.final_gap() < tol.norm_final_rel * norm_table_data.s_norm,
            format!(
                "final gap {} vs {} of |S| = {}",
                norm_table_data.final_gap(),
                tol.norm_final_rel,
                norm_table_data.s_norm
            ),
        ));

        let sec = at_stage("field section", section(&s_mult, &stages))?;
        let profile = at_stage("field profile", norm_profile(&sec))?;
        let mut field_table = Table::new("field.csv", &["t", "fiber_norm", "continuity_gap"]);
        for row in &profile.rows {
            field_table.push(vec![
                row.t.to_string(),
                fmt_float(row.fiber_norm),
                fmt_float(row.continuity_gap),
            ]);
        }
        tables.push(field_table);
        assertions.push(Assertion::check(
            "field.contraction",
            sec.contraction_defect() <= tol.field_contraction,
            format!("max fiber norm excess {:e}", sec.contraction_defect()),
        ));
        assertions.push(Assertion::check(
            "field.continuity",
            profile.final_gap() < tol.norm_final_rel * profile.limit_norm,
            format!("final continuity gap {}", profile.final_gap()),
        ));

        if n_stages < 3 {
            assertions.push(Assertion::skip(
                "field.ideal_tail",
                "no stage beyond the ideal support",
            ));
        } else {
            let zero = GridOperator::new(space, Array2::zeros((space.node_count(), space.node_count())))?;
            let a1 = at_stage(
                "ideal section",
                random_banded(stages[0].delone(), 2.0 * stages[0].r_cover(), config.seeds.rng + 3),
            )?;
            let a2 = at_stage(
                "ideal section",
                random_banded(stages[1].delone(), 2.0 * stages[1].r_cover(), config.seeds.rng + 4),
            )?;
            let fam = at_stage("ideal section", IdealFamily::new(vec![(1, a1), (2, a2)]))?;
            let ideal_sec = at_stage(
                "ideal section",
                section(&zero, &stages).and_then(|s| s.with_ideal(fam, &stages)),
            )?;
            let ideal_profile = at_stage("ideal profile", norm_profile(&ideal_sec))?;
            let mut ideal_table =
                Table::new("field_ideal.csv", &["t", "fiber_norm", "continuity_gap"]);
            for row in &ideal_profile.rows {
                ideal_table.push(vec![
                    row.t.to_string(),
                    fmt_float(row.fiber_norm),
                    fmt_float(row.continuity_gap),
                ]);
            }
            tables.push(ideal_table);
            assertions.push(Assertion::check(
                "field.ideal_tail",
                ideal_profile.zero_beyond_support(1e-12),
                "fiber norms vanish beyond the declared support".into(),
            ));
        }

        let axioms = at_stage(
            "field axioms",
            field_axioms_check(
                &[section(&r_in, &stages)?, section(&s_in, &stages)?],
                &stages,
            ),
        )?;
        assertions.push(Assertion::check(
            "field.faithful",
            axioms.pairs.iter().all(|p| p.distinct),
            "distinct sources yield distinct sections".into(),
        ));
        let product_final = axioms.product_defect.last().unwrap().defect;
        assertions.push(Assertion::check(
            "field.product_defect",
            product_final < tol.mult_final,
            format!("final product defect {product_final:e}"),
        ));
    }

    for t in &tables {
        t.write(&config.output_dir)?;
    }
    let passed = assertions.iter().all(|a| a.outcome != Outcome::Failed);
    let report = Report {
        experiment: format!("suite-{}", &hash[..12]),
        config_hash: hash,
        rng_seed: config.seeds.rng,
        tables: tables.iter().map(|t| t.name.clone()).collect(),
        assertions,
        passed,
    };
    write_json(&config.output_dir.join("summary.json"), &report)?;
    Ok(report)
}
