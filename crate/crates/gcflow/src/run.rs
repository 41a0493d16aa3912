//! Run orchestration: execute a configured mode and persist run.json,
//! series.csv, final.obj and support_final.csv.

use std::io::Write as _;
use std::path::Path;

use serde_json::json;

use crate::body::{self, SupportField};
use crate::config::{Mode, RunConfig};
use crate::diag::{self, DiagnosticsRow};
use crate::error::Result;
use crate::flow::{
    self, FlowState, StepController, Weight, blowup_horizon, step_normalized,
};
use crate::grid::Grid;
use crate::init::make_initial;
use crate::mesh::export_mesh;
use crate::phi::{parse_phi, validate_phi};
use crate::solver;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

struct Recorder {
    phi: Vec<f64>,
    p: f64,
    c1: f64,
    rows: Vec<DiagnosticsRow>,
}

impl Recorder {
    fn new(phi: Vec<f64>, p: f64) -> Recorder {
        Recorder {
            phi,
            p,
            c1: 0.0,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, state: &FlowState, ctl: &StepController) -> Result<()> {
        self.c1 = self.c1.max(state.h.max());
        let mut row = diag::record(state, &self.phi, self.p, self.c1)?;
        row.dt = ctl.last_dt;
        self.rows.push(row);
        Ok(())
    }
}

fn write_support_csv(path: &Path, h: &SupportField) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "u1,u2,u3,h")?;
    for (u, v) in h.grid.nodes().iter().zip(&h.values) {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", u[0], u[1], u[2], v)?;
    }
    Ok(())
}

fn write_outputs(
    cfg: &RunConfig,
    resolved: &RunConfig,
    h_final: &SupportField,
    rows: &[DiagnosticsRow],
    summary: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut series = std::io::BufWriter::new(std::fs::File::create(cfg.out.join("series.csv"))?);
    diag::write_csv(&mut series, rows)?;
    write_support_csv(&cfg.out.join("support_final.csv"), h_final)?;
    if cfg.n == 2 {
        export_mesh(h_final, &cfg.out.join("final.obj"))?;
    }
    let doc = json!({
        "config": resolved,
        "summary": summary,
    });
    std::fs::write(
        cfg.out.join("run.json"),
        serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?,
    )?;
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let grid = std::sync::Arc::new(Grid::build(cfg.n, cfg.resolution)?);
    let n1 = (cfg.n + 1) as f64;
    let phi = parse_phi(&cfg.phi)?;
    // Solve mode carries the evenness gate unless the exponent sits in the
    // recentering regime (-n-1, -n].
    let require_even = cfg.mode == Mode::Solve && !(cfg.p <= -(n1 - 1.0));
    let meta = validate_phi(&phi, &grid, require_even)?;
    let init_spec = cfg.effective_init();
    let h0 = make_initial(&init_spec, &grid)?;
    let phi_grid = phi.sample(&grid);

    let mut resolved = cfg.clone();
    resolved.init = init_spec;

    match cfg.mode {
        Mode::Unnormalized => {
            // Blow-up policy: for p < n+1 the horizon is clamped to 90% of
            // the guaranteed-existence lower bound.
            let (t_end, clamped) = if cfg.p < n1 {
                let (lo, _) = blowup_horizon(&h0, &phi, cfg.p)?;
                let cap = 0.9 * lo;
                match cfg.t_end {
                    Some(t) if t <= cap => (t, false),
                    _ => (cap, true),
                }
            } else {
                (cfg.t_end.unwrap_or(0.5), false)
            };
            resolved.t_end = Some(t_end);
            let mut rec = Recorder::new(phi_grid, cfg.p);
            let mut ctl = StepController::new(cfg.tol);
            if let Some(d) = cfg.dt_max {
                ctl.dt_max = d;
            }
            let mut state = FlowState::new(h0)?;
            rec.push(&state, &ctl)?;
            while state.t < t_end - 1e-14 * t_end.max(1.0) {
                state = flow::step_unnormalized_capped(state, &phi, cfg.p, &mut ctl, t_end)?;
                rec.push(&state, &ctl)?;
            }
            let summary = json!({
                "mode": "unnormalized",
                "steps": state.step_count,
                "t_final": state.t,
                "t_end": t_end,
                "horizon_clamped": clamped,
                "min_h": state.h.min(),
                "max_h": state.h.max(),
                "volume": body::volume(&state.h)?,
                "phi_even_defect": meta.even_defect,
            });
            write_outputs(cfg, &resolved, &state.h, &rec.rows, summary)?;
            Ok(EXIT_OK)
        }
        Mode::Normalized => {
            let mut rec = Recorder::new(phi_grid, cfg.p);
            let mut ctl = StepController::new(cfg.tol.min(1e-6));
            if let Some(d) = cfg.dt_max {
                ctl.dt_max = d;
            }
            let mut state = FlowState::new(body::normalize_to_unit_volume(&h0)?)?;
            rec.push(&state, &ctl)?;
            let mut quiet = 0u32;
            let mut settled = false;
            while state.t < cfg.max_tau {
                state = step_normalized(state, &phi, cfg.p, &mut ctl)?;
                rec.push(&state, &ctl)?;
                if ctl.last_speed_sup < cfg.tol * state.h.max() {
                    quiet += 1;
                    if quiet >= 10 {
                        settled = true;
                        break;
                    }
                } else {
                    quiet = 0;
                }
            }
            let (c, residual) = solver::self_similar_residual(&state.h, &rec.phi, cfg.p)?;
            let summary = json!({
                "mode": "normalized",
                "steps": state.step_count,
                "tau_final": state.t,
                "settled": settled,
                "c": c,
                "residual_sup": residual,
                "min_h": state.h.min(),
                "max_h": state.h.max(),
                "volume": body::volume(&state.h)?,
                "phi_even_defect": meta.even_defect,
            });
            write_outputs(cfg, &resolved, &state.h, &rec.rows, summary)?;
            Ok(if settled { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Mode::Solve => {
            let mut rec = Recorder::new(phi_grid, cfg.p);
            let result = {
                let mut cb = |state: &FlowState, ctl: &StepController| {
                    // Row errors are not expected mid-run; surface them at the end.
                    let _ = rec.push(state, ctl);
                };
                solver::solve_traced(&phi, cfg.p, &h0, cfg.tol, cfg.max_tau, Some(&mut cb))?
            };
            let report = solver::verify_solution(&result, &phi, cfg.p)?;
            let summary = json!({
                "mode": "solve",
                "converged": result.converged,
                "iterations": result.iterations,
                "tau_final": result.tau,
                "c": result.c,
                "lambda": result.lambda,
                "residual_sup": result.residual_sup,
                "equation_defect": report.equation_defect,
                "duality_residual": report.duality_residual,
                "symmetry_defect": report.symmetry_defect,
                "phi_even_defect": meta.even_defect,
            });
            write_outputs(cfg, &resolved, &result.h_solution, &rec.rows, summary)?;
            Ok(if result.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
    }
}
