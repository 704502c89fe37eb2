//! Experiment runners: the eps sweep against the effective solution, and
//! the common-atom demonstration.

use super::config::{ConfigError, Experiment};
use super::report::{ConvergenceReport, ConvergenceRow, DemoReport, DemoRow};
use crate::effective::{
    assemble_effective, effective_energy, solve_effective, transmission_residuals,
    EffectiveError, EffectiveFieldView, EffectiveSolution, EffectiveSystem,
};
use crate::finescale::{
    self, assemble, energy, error_norm, plane_values, solve, ErrNorm, FemError, ReferenceField,
};
use crate::grid::Grid;
use crate::media::{FeatureKind, LayeredProfile, NestedRegime};
use crate::oracle::{compare_1d, solve_eps_1d, solve_limit_1d, Norm1D};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("effective solve failed: {0}")]
    Effective(#[from] EffectiveError),
    #[error("fine-scale setup failed: {0}")]
    Fem(#[from] FemError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Media(#[from] crate::media::MediaError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Emit(#[from] super::report::EmitError),
}

impl RunError {
    /// CLI exit code category: 1 config, 2 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Media(_) | RunError::Grid(_) => 1,
            RunError::Effective(EffectiveError::Solve(_)) => 2,
            RunError::Effective(_) => 1,
            RunError::Fem(FemError::Solve(_)) => 2,
            RunError::Fem(_) => 1,
            RunError::Oracle(_) => 1,
            RunError::Emit(_) => 1,
        }
    }
}

/// Run the eps sweep: fine-scale solves compared against the effective
/// solution (the fixed target as eps varies). `d = 1` runs through the
/// exact oracle; `d >= 2` through the finite element solvers. Per-row
/// solver failures are recorded and the sweep continues.
pub fn run_convergence(exp: &Experiment) -> Result<ConvergenceReport, RunError> {
    let profile = exp
        .profile
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("run needs a [profile] section".into()))?;
    if profile
        .features()
        .iter()
        .any(|f| f.kind == FeatureKind::Nested)
    {
        return Err(ConfigError::Invalid(
            "nested profiles are only allowed in the common-atom demo".into(),
        )
        .into());
    }
    let pair = exp.limit_pair()?;

    if exp.dimension == 1 {
        run_convergence_oracle(exp, profile, &pair)
    } else {
        run_convergence_fem(exp, profile, &pair)
    }
}

fn run_convergence_oracle(
    exp: &Experiment,
    profile: &LayeredProfile,
    pair: &crate::measures::MeasurePair,
) -> Result<ConvergenceReport, RunError> {
    if exp.n_comp != 1 {
        return Err(ConfigError::Invalid("the 1-D path is scalar".into()).into());
    }
    let f = exp.source.as_piecewise(0);
    let limit = solve_limit_1d(&pair.nu, &f)?;
    let limit_jumps: Vec<(f64, f64)> = limit.jumps().to_vec();
    let effective_l1_norm = {
        let zero = solve_limit_1d(&pair.nu, &crate::oracle::constant_source(exp.length, 0.0))?;
        compare_1d(&limit, &zero, Norm1D::L1)?
    };

    if exp.export_solutions {
        export_oracle_solution(exp, &limit, "solution_limit")?;
    }
    let mut rows = Vec::with_capacity(exp.eps_list.len());
    for (k, &eps) in exp.eps_list.iter().enumerate() {
        let field = profile.realize(eps)?;
        let sol = solve_eps_1d(&field, &f)?;
        if exp.export_solutions {
            export_oracle_solution(exp, &sol, &format!("solution_fine_eps{k}"))?;
        }
        let l1 = compare_1d(&sol, &limit, Norm1D::L1)?;
        let l2 = compare_1d(&sol, &limit, Norm1D::L2)?;
        // fine-scale rise across each feature against the limit jump
        let jumps = profile
            .features()
            .iter()
            .map(|feat| {
                let c = feat.center.to_f64();
                let half = 0.5 * feat.total_width(eps);
                let rise = sol.rise_over(c - half, c + half);
                let reference = limit.jump_at(c);
                let rel = if reference != 0.0 {
                    (rise - reference).abs() / reference.abs()
                } else {
                    rise.abs()
                };
                (c, rise.abs(), rel)
            })
            .collect();
        rows.push(ConvergenceRow {
            eps,
            h: 0.0,
            l1_error: l1,
            l2_error: l2,
            energy_fine: sol.energy(),
            energy_eff: limit.energy(),
            iterations: 0,
            jumps,
            error: None,
        });
    }
    Ok(ConvergenceReport {
        name: exp.name.clone(),
        rows,
        limit_jumps,
        residuals: vec![],
        effective_l1_norm,
        config_hash: exp.config_hash.clone(),
        warnings: exp.warnings.clone(),
    })
}

/// Everything the FEM path computes once (effective side).
pub struct EffectiveRun {
    pub grid: Grid,
    pub system: EffectiveSystem,
    pub solution: EffectiveSolution,
    pub energy: f64,
    pub l1_norm: f64,
    pub residuals: Vec<(f64, bool, f64)>,
}

pub fn solve_effective_once(
    exp: &Experiment,
    pair: &crate::measures::MeasurePair,
) -> Result<EffectiveRun, RunError> {
    let mut required: Vec<f64> = pair
        .nu
        .atoms()
        .iter()
        .chain(pair.m.atoms())
        .map(|a| a.location.to_f64())
        .collect();
    required.extend_from_slice(&pair.nu.density_breaks()[1..pair.nu.density_breaks().len() - 1]);
    required.extend_from_slice(&pair.m.density_breaks()[1..pair.m.density_breaks().len() - 1]);
    required.extend_from_slice(&exp.source.breaks()[1..exp.source.breaks().len() - 1]);
    let extents = vec![exp.transverse_extent; exp.dimension - 1];
    let grid = Grid::build(exp.length, &required, &extents, exp.resolution, exp.k_min)?;
    let system = assemble_effective(pair, &exp.eff_law, &grid, &exp.source)?;
    let solution = solve_effective(&system, &grid, exp.tol, exp.max_iter)?;
    let energy = effective_energy(&solution, &system);
    let residuals = transmission_residuals(&grid, &system, &solution)
        .into_iter()
        .map(|r| (r.location, r.is_nu, r.relative))
        .collect();
    let l1_norm = {
        let view = EffectiveFieldView {
            grid: &grid,
            system: &system,
            solution: &solution,
        };
        reference_l1_norm(&grid, exp.n_comp, &view)
    };
    Ok(EffectiveRun {
        grid,
        system,
        solution,
        energy,
        l1_norm,
        residuals,
    })
}

/// Quadrature of `|reference|` over the grid (jump-aware).
pub fn reference_l1_norm(grid: &Grid, n_comp: usize, reference: &dyn ReferenceField) -> f64 {
    // reuse the error quadrature against the zero solution
    let zero = finescale::FemSolution::zeros(grid.n_nodes(), n_comp);
    error_norm(grid, &zero, reference, ErrNorm::L1)
}

fn run_convergence_fem(
    exp: &Experiment,
    profile: &LayeredProfile,
    pair: &crate::measures::MeasurePair,
) -> Result<ConvergenceReport, RunError> {
    let eff = solve_effective_once(exp, pair)?;
    let view = EffectiveFieldView {
        grid: &eff.grid,
        system: &eff.system,
        solution: &eff.solution,
    };

    if exp.export_solutions {
        export_effective_solution(exp, &eff)?;
    }
    let mut rows = Vec::with_capacity(exp.eps_list.len());
    for (k, &eps) in exp.eps_list.iter().enumerate() {
        let field = profile.realize(eps)?;
        let mut required: Vec<f64> =
            field.breaks()[1..field.breaks().len() - 1].to_vec();
        required.extend_from_slice(&exp.source.breaks()[1..exp.source.breaks().len() - 1]);
        let extents = vec![exp.transverse_extent; exp.dimension - 1];
        let grid = Grid::build(exp.length, &required, &extents, exp.resolution, exp.k_min)?;
        let system = assemble(&grid, &field, &exp.law, &exp.source)?;
        match solve(&system, exp.tol, exp.max_iter) {
            Ok(sol) => {
                if exp.export_solutions {
                    export_fem_solution(exp, &grid, &sol, &format!("solution_fine_eps{k}"))?;
                }
                let l1 = error_norm(&grid, &sol, &view, ErrNorm::L1);
                let l2 = error_norm(&grid, &sol, &view, ErrNorm::L2);
                let jumps = profile
                    .features()
                    .iter()
                    .filter(|feat| feat.kind == FeatureKind::Soft)
                    .map(|feat| {
                        let (l2_jump, rel) =
                            fine_jump_vs_effective(exp, &grid, &sol, feat, eps, &eff);
                        (feat.center.to_f64(), l2_jump, rel)
                    })
                    .collect();
                rows.push(ConvergenceRow {
                    eps,
                    h: grid.h_max(),
                    l1_error: l1,
                    l2_error: l2,
                    energy_fine: energy(&sol, &system),
                    energy_eff: eff.energy,
                    iterations: sol.iterations,
                    jumps,
                    error: None,
                });
            }
            Err(err) => rows.push(ConvergenceRow {
                eps,
                h: grid.h_max(),
                l1_error: f64::NAN,
                l2_error: f64::NAN,
                energy_fine: f64::NAN,
                energy_eff: eff.energy,
                iterations: 0,
                jumps: vec![],
                error: Some(err.to_string()),
            }),
        }
    }
    Ok(ConvergenceReport {
        name: exp.name.clone(),
        rows,
        limit_jumps: vec![],
        residuals: eff.residuals.clone(),
        effective_l1_norm: eff.l1_norm,
        config_hash: exp.config_hash.clone(),
        warnings: exp.warnings.clone(),
    })
}

/// Extracted fine-scale jump across a realized soft layer, compared with
/// the effective jump field in the discrete `L2(Sigma)` norm. Fine and
/// effective grids share the transverse axes, so profiles compare nodally.
fn fine_jump_vs_effective(
    exp: &Experiment,
    grid: &Grid,
    sol: &finescale::FemSolution,
    feature: &crate::media::Feature,
    eps: f64,
    eff: &EffectiveRun,
) -> (f64, f64) {
    let c = feature.center.to_f64();
    let half = 0.5 * feature.total_width(eps);
    let (Some(left), Some(right)) = (
        grid.x1_plane_index(c - half),
        grid.x1_plane_index(c + half),
    ) else {
        return (f64::NAN, f64::NAN);
    };
    let n_comp = exp.n_comp;
    let n_t = grid.node_counts()[1..].iter().product::<usize>().max(1);
    // transverse trapezoid weights
    let weights: Vec<f64> = transverse_weights(grid);
    let eff_jump = eff.solution.jump_at(c);
    let mut fine_sq = 0.0;
    let mut diff_sq = 0.0;
    let mut eff_sq = 0.0;
    for comp in 0..n_comp {
        let lo = plane_values(grid, sol, left, comp);
        let hi = plane_values(grid, sol, right, comp);
        for t in 0..n_t {
            let rise = hi[t] - lo[t];
            fine_sq += weights[t] * rise * rise;
            if let Some(j) = eff_jump {
                let e = j.values[t][comp];
                diff_sq += weights[t] * (rise - e) * (rise - e);
                eff_sq += weights[t] * e * e;
            }
        }
    }
    let rel = if eff_sq > 0.0 {
        (diff_sq / eff_sq).sqrt()
    } else {
        f64::NAN
    };
    (fine_sq.sqrt(), rel)
}

fn transverse_weights(grid: &Grid) -> Vec<f64> {
    let axes: Vec<&[f64]> = (1..grid.dim()).map(|k| grid.axis(k)).collect();
    if axes.is_empty() {
        return vec![1.0];
    }
    let axis_weights: Vec<Vec<f64>> = axes
        .iter()
        .map(|ax| {
            let n = ax.len();
            (0..n)
                .map(|i| {
                    let left = if i > 0 { ax[i] - ax[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { ax[i + 1] - ax[i] } else { 0.0 };
                    0.5 * (left + right)
                })
                .collect()
        })
        .collect();
    let mut out = vec![1.0];
    for w in axis_weights {
        let mut next = Vec::with_capacity(out.len() * w.len());
        for wk in &w {
            for prev in &out {
                next.push(prev * wk);
            }
        }
        out = next;
    }
    out
}

/// Common-atom demonstration: two nested families with the same declared
/// limits but opposite regimes. Reports the inter-family `L1` distance per
/// eps together with each family's internal Cauchy increments.
pub fn run_common_atom_demo(exp: &Experiment) -> Result<DemoReport, RunError> {
    if exp.dimension != 1 || exp.n_comp != 1 {
        return Err(ConfigError::Invalid("the common-atom demo is 1-D scalar".into()).into());
    }
    let profile_a = exp
        .profile
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("demo needs a [profile] section".into()))?;
    let nested_a: Vec<&crate::media::Feature> = profile_a
        .features()
        .iter()
        .filter(|f| f.kind == FeatureKind::Nested)
        .collect();
    if nested_a.len() != 1 || profile_a.features().len() != 1 {
        return Err(ConfigError::Invalid(
            "demo needs exactly one nested feature in [profile]".into(),
        )
        .into());
    }
    let profile_b = match &exp.profile2 {
        Some(p) => {
            let nested_b = p
                .features()
                .iter()
                .filter(|f| f.kind == FeatureKind::Nested)
                .count();
            if nested_b != 1 || p.features().len() != 1 {
                return Err(ConfigError::Invalid(
                    "demo needs exactly one nested feature in [profile2]".into(),
                )
                .into());
            }
            p.clone()
        }
        None => swap_nested_radii(profile_a)?,
    };

    let regime_name = |p: &LayeredProfile| -> String {
        match p.features()[0].nested_regime() {
            Some(NestedRegime::StiffInside) => "stiff-inside (r2 << r1)".into(),
            Some(NestedRegime::SoftInside) => "soft-inside (r1 << r2)".into(),
            Some(NestedRegime::Equal) => "equal radii".into(),
            None => "non-nested".into(),
        }
    };

    let f = exp.source.as_piecewise(0);
    let mut rows = Vec::with_capacity(exp.eps_list.len());
    let mut prev_a: Option<crate::oracle::PiecewiseSolution1D> = None;
    let mut prev_b: Option<crate::oracle::PiecewiseSolution1D> = None;
    for &eps in &exp.eps_list {
        let sol_a = solve_eps_1d(&profile_a.realize(eps)?, &f)?;
        let sol_b = solve_eps_1d(&profile_b.realize(eps)?, &f)?;
        let distance = compare_1d(&sol_a, &sol_b, Norm1D::L1)?;
        let cauchy_a = match &prev_a {
            Some(p) => compare_1d(&sol_a, p, Norm1D::L1)?,
            None => f64::NAN,
        };
        let cauchy_b = match &prev_b {
            Some(p) => compare_1d(&sol_b, p, Norm1D::L1)?,
            None => f64::NAN,
        };
        rows.push(DemoRow {
            eps,
            distance,
            cauchy_a,
            cauchy_b,
        });
        prev_a = Some(sol_a);
        prev_b = Some(sol_b);
    }
    Ok(DemoReport {
        name: exp.name.clone(),
        rows,
        regime_a: regime_name(profile_a),
        regime_b: regime_name(&profile_b),
        config_hash: exp.config_hash.clone(),
    })
}

fn write_artifact(exp: &Experiment, name: &str, content: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(&exp.out_dir).map_err(|source| {
        super::report::EmitError::Io {
            path: exp.out_dir.display().to_string(),
            source,
        }
    })?;
    let path = exp.out_dir.join(name);
    std::fs::write(&path, content).map_err(|source| super::report::EmitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Sampled export of a closed-form 1-D solution in the FEM CSV schema.
fn export_oracle_solution(
    exp: &Experiment,
    sol: &crate::oracle::PiecewiseSolution1D,
    base: &str,
) -> Result<(), RunError> {
    let mut xs: Vec<f64> = sol.as_piecewise().breaks().to_vec();
    let n = 512;
    for k in 0..=n {
        xs.push(exp.length * k as f64 / n as f64);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let coords: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let values: Vec<Vec<f64>> = xs.iter().map(|x| vec![sol.eval(*x)]).collect();
    write_artifact(
        exp,
        &format!("{base}.csv"),
        &super::report::solution_csv(&coords, &values, 1),
    )?;
    write_artifact(
        exp,
        &format!("{base}.dat"),
        &super::report::solution_plotdata(&coords, &values),
    )
}

fn grid_nodal_table(
    grid: &Grid,
    value: impl Fn(usize, usize) -> f64,
    n_comp: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let coords: Vec<Vec<f64>> = (0..grid.n_nodes()).map(|n| grid.node_coords(n)).collect();
    let values: Vec<Vec<f64>> = (0..grid.n_nodes())
        .map(|n| (0..n_comp).map(|c| value(n, c)).collect())
        .collect();
    (coords, values)
}

fn export_fem_solution(
    exp: &Experiment,
    grid: &Grid,
    sol: &finescale::FemSolution,
    base: &str,
) -> Result<(), RunError> {
    let (coords, values) = grid_nodal_table(grid, |n, c| sol.value(n, c), exp.n_comp);
    write_artifact(
        exp,
        &format!("{base}.csv"),
        &super::report::solution_csv(&coords, &values, exp.n_comp),
    )?;
    write_artifact(
        exp,
        &format!("{base}.dat"),
        &super::report::solution_plotdata(&coords, &values),
    )
}

/// The effective solution exports the sheet-averaged bulk field plus one
/// CSV block per `nu`-atom with the jump profile, labeled by location.
fn export_effective_solution(exp: &Experiment, eff: &EffectiveRun) -> Result<(), RunError> {
    let averaged = crate::effective::sheet_averaged_nodal(&eff.system, &eff.solution);
    let (coords, values) = grid_nodal_table(
        &eff.grid,
        |n, c| averaged[n * exp.n_comp + c],
        exp.n_comp,
    );
    let mut csv = super::report::solution_csv(&coords, &values, exp.n_comp);
    for jump in &eff.solution.jumps {
        csv.push_str(&format!("\n# atom t={}\n", jump.location));
        let tdim = eff.grid.dim() - 1;
        for k in 0..tdim {
            if k > 0 {
                csv.push(',');
            }
            csv.push_str(&format!("x{}", k + 2));
        }
        if tdim == 0 {
            csv.push_str("point");
        }
        for c in 0..exp.n_comp {
            csv.push_str(&format!(",jump_u{}", c + 1));
        }
        csv.push('\n');
        let counts = eff.grid.node_counts();
        let transverse: usize = counts[1..].iter().product::<usize>().max(1);
        for t in 0..transverse {
            let mut rem = t;
            let mut first = true;
            for (k, c) in counts[1..].iter().enumerate() {
                if !first {
                    csv.push(',');
                }
                first = false;
                csv.push_str(&format!("{}", eff.grid.axis(1 + k)[rem % c]));
                rem /= c;
            }
            if tdim == 0 {
                csv.push('0');
            }
            for c in 0..exp.n_comp {
                csv.push_str(&format!(",{}", jump.values[t][c]));
            }
            csv.push('\n');
        }
    }
    write_artifact(exp, "solution_effective.csv", &csv)?;
    write_artifact(
        exp,
        "solution_effective.dat",
        &super::report::solution_plotdata(&coords, &values),
    )
}

fn swap_nested_radii(profile: &LayeredProfile) -> Result<LayeredProfile, RunError> {
    let features = profile
        .features()
        .iter()
        .map(|f| {
            let mut g = f.clone();
            if f.kind == FeatureKind::Nested {
                let inner = f.inner.expect("nested feature has an inner radius");
                g.width = inner;
                g.value = inner;
                g.inner = Some(f.width);
            }
            g
        })
        .collect();
    Ok(LayeredProfile::new(profile.length(), profile.background(), features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn e1_report_shape() {
        let exp = presets::preset("E1").unwrap().validate().unwrap();
        let report = run_convergence(&exp).unwrap();
        assert_eq!(report.rows.len(), exp.eps_list.len());
        assert!((report.limit_jumps[0].1 - 1.0 / 12.0).abs() < 1e-12);
        // strictly decreasing L1 error along the sweep
        for w in report.rows.windows(2) {
            assert!(w[1].l1_error < w[0].l1_error);
        }
    }

    #[test]
    fn single_eps_constant_profile() {
        let mut raw = presets::preset("E1").unwrap();
        raw.profile.as_mut().unwrap().features.clear();
        raw.sweep.eps = vec![0.1];
        raw.preset = Some("custom".into());
        let exp = raw.validate().unwrap();
        let report = run_convergence(&exp).unwrap();
        assert_eq!(report.rows.len(), 1);
        // fine and limit problems coincide: zero error
        assert!(report.rows[0].l1_error < 1e-14);
    }

    #[test]
    fn nested_profile_rejected_outside_demo() {
        let raw = presets::preset("E4").unwrap();
        let exp = raw.validate().unwrap();
        let err = run_convergence(&exp).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn demo_identical_regimes_zero_distance() {
        let mut raw = presets::preset("E4").unwrap();
        raw.profile2 = raw.profile.clone();
        let exp = raw.validate().unwrap();
        let report = run_common_atom_demo(&exp).unwrap();
        for row in &report.rows {
            assert_eq!(row.distance, 0.0);
        }
    }

    #[test]
    fn demo_rejects_non_nested() {
        let mut raw = presets::preset("E4").unwrap();
        raw.profile = presets::preset("E1").unwrap().profile;
        let exp = raw.validate().unwrap();
        let err = run_common_atom_demo(&exp).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
