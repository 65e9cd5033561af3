use holderlab::export::{c_csv, experiment_csv, grid_csv, iterate_csv, pressure_csv, spectrum_csv, to_json, ThermoSummary};
use holderlab::holder::{geometric_scales, EmpiricalConfig, ExperimentConfig};
use holderlab::operator::{eval_t_mode, grid_nodes, iterate_seminorms, ramp, t_grid, GapProbeOptions};
use holderlab::takagi::TakagiEvaluator;
use holderlab::{
    conjugacy_residual, eval_c_series, gap_probe, iterate_m, rigidity_report, spectrum_experiment, GridFunction, IfSystem,
    MultiIndex, NumericMode, PressureCurve, ProbVector,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::cache::Artifact;
use crate::config::*;
use crate::error::CliError;

/// Params with defaults filled in, in the canonical form used for the cache key and manifest.
pub fn canonical_params(command: CommandName, raw: &Value) -> Result<Value, CliError> {
    fn norm<P: Params>(raw: &Value) -> Result<Value, CliError> {
        Ok(serde_json::to_value(parse_params::<P>(raw)?).expect("serializable params"))
    }
    match command {
        CommandName::EvalT => norm::<EvalTParams>(raw),
        CommandName::EvalC => norm::<EvalCParams>(raw),
        CommandName::Pressure => norm::<PressureParams>(raw),
        CommandName::Spectrum => norm::<SpectrumParams>(raw),
        CommandName::Gap => norm::<GapParams>(raw),
        CommandName::Exponent => norm::<ExponentParams>(raw),
        CommandName::Conjugacy => norm::<ConjugacyParams>(raw),
        CommandName::Report => norm::<ReportParams>(raw),
    }
}

fn text(name: &str, body: String) -> Artifact {
    Artifact { name: name.to_string(), bytes: body.into_bytes() }
}

fn json<T: Serialize>(name: &str, v: &T) -> Artifact {
    text(name, to_json(v))
}

pub struct Context<'a> {
    pub system: &'a IfSystem,
    pub p: &'a ProbVector,
    pub mode: NumericMode,
    pub seed: u64,
}

pub fn execute(command: CommandName, params: &Value, cx: &Context) -> Result<Vec<Artifact>, CliError> {
    let module = command.module();
    let lib = |e| CliError::from_lib(module, e);
    let (sys, p) = (cx.system, cx.p);
    match command {
        CommandName::EvalT => {
            let q: EvalTParams = parse_params(params)?;
            let nodes = grid_nodes(sys, q.grid_level, q.margin);
            let grid = match cx.mode {
                NumericMode::Float => t_grid(sys, p, &nodes, q.tol).map_err(lib)?,
                NumericMode::Rational => {
                    let values = nodes
                        .par_iter()
                        .map(|&x| eval_t_mode(sys, p, x, q.tol, NumericMode::Rational).map(|t| t.value))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(lib)?;
                    GridFunction::new(nodes, values, 0.0, 1.0).map_err(lib)?
                }
            };
            Ok(vec![text("T.csv", grid_csv(&grid))])
        }
        CommandName::EvalC => {
            let q: EvalCParams = parse_params(params)?;
            let n = MultiIndex(q.n.clone());
            let nodes = grid_nodes(sys, q.grid_level, q.margin);
            let points = match q.method {
                CMethod::Pointwise => {
                    let ev = TakagiEvaluator::new(sys, p, &n).map_err(lib)?;
                    nodes.par_iter().map(|&x| (x, ev.eval(x, q.depth))).collect::<Vec<_>>()
                }
                CMethod::Series => {
                    let levels = eval_c_series(sys, p, &n, &nodes, q.terms).map_err(lib)?;
                    let top = levels.into_iter().find(|l| l.n == n).expect("series includes the requested index");
                    if top.inconclusive {
                        log::warn!("series terms for n = {:?} did not decay", n.0);
                    }
                    let err = top.tail_estimate;
                    top.grid
                        .nodes
                        .iter()
                        .zip(&top.grid.values)
                        .map(|(&x, &value)| (x, holderlab::takagi::CValue { value, err }))
                        .collect()
                }
            };
            Ok(vec![text("C.csv", c_csv(&points))])
        }
        CommandName::Pressure => {
            let q: PressureParams = parse_params(params)?;
            let curve = PressureCurve::new(sys, p).map_err(lib)?;
            let samples = curve.samples(&q.betas.values()?).map_err(lib)?;
            let ends = curve.endpoints().map_err(lib)?;
            Ok(vec![
                text("pressure.csv", pressure_csv(&samples)),
                json("thermo.json", &ThermoSummary::new(&ends, q.rigidity_tol)),
            ])
        }
        CommandName::Spectrum => {
            let q: SpectrumParams = parse_params(params)?;
            let curve = PressureCurve::new(sys, p).map_err(lib)?;
            let ends = curve.endpoints().map_err(lib)?;
            let alphas = match &q.alphas {
                Some(g) => g.values()?,
                None => {
                    let (lo, hi) = (ends.alpha_minus, ends.alpha_plus);
                    (0..q.count).map(|k| lo + (hi - lo) * k as f64 / (q.count - 1) as f64).collect()
                }
            };
            let entries = curve.spectrum(&alphas, q.tol).map_err(lib)?;
            Ok(vec![
                text("spectrum.csv", spectrum_csv(&entries)),
                json("thermo.json", &ThermoSummary::new(&ends, q.rigidity_tol)),
            ])
        }
        CommandName::Gap => {
            let q: GapParams = parse_params(params)?;
            let alphas = if q.alphas.is_empty() {
                let am = holderlab::alpha_endpoints(sys, p).map_err(|e| CliError::from_lib("thermo", e))?.alpha_minus;
                default_gap_alphas(am)
            } else {
                q.alphas.clone()
            };
            let opts = GapProbeOptions { grid_level: q.grid_level };
            let reports = alphas
                .iter()
                .map(|&a| gap_probe(sys, p, a, q.n_max, opts))
                .collect::<Result<Vec<_>, _>>()
                .map_err(lib)?;
            let mut csv = String::from("alpha,n,norm\n");
            for r in &reports {
                for (k, v) in r.norms.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", r.alpha, k + 1, v));
                }
            }
            let nodes = grid_nodes(sys, q.iterate_grid_level, 0.0);
            let h0 = GridFunction::from_fn(&nodes, |y| ramp(sys, y), 0.0, 1.0).map_err(lib)?;
            let diag = iterate_m(sys, p, &h0, q.iterate_steps).map_err(lib)?;
            let seminorms = iterate_seminorms(sys, p, &h0, q.iterate_steps, alphas[0]).map_err(lib)?;
            Ok(vec![
                json("gap.json", &reports),
                text("gap.csv", csv),
                text("iterate.csv", iterate_csv(&diag.residuals, &seminorms)),
            ])
        }
        CommandName::Exponent => {
            let q: ExponentParams = parse_params(params)?;
            let config = ExperimentConfig {
                word_len: q.word_len,
                count: q.count,
                seed: cx.seed,
                empirical: q.empirical.as_ref().map(|e| EmpiricalConfig {
                    n: MultiIndex(e.n.clone()),
                    scales: geometric_scales(e.r0, e.ratio, e.scales),
                    depth: e.depth,
                    points: e.points,
                }),
            };
            let rows = spectrum_experiment(sys, p, &q.betas.values()?, &config).map_err(lib)?;
            Ok(vec![text("experiment.csv", experiment_csv(&rows))])
        }
        CommandName::Conjugacy => {
            let q: ConjugacyParams = parse_params(params)?;
            let report = conjugacy_residual(sys, p, q.samples, cx.seed).map_err(lib)?;
            Ok(vec![json("conjugacy.json", &report)])
        }
        CommandName::Report => {
            let q: ReportParams = parse_params(params)?;
            let report = rigidity_report(sys, p, q.tol).map_err(lib)?;
            let ends = holderlab::alpha_endpoints(sys, p).map_err(|e| CliError::from_lib("thermo", e))?;
            Ok(vec![json("rigidity.json", &report), json("thermo.json", &ThermoSummary::new(&ends, q.tol))])
        }
    }
}

/// `α_-` and its neighbours at ±0.1, kept when inside `(0, 1]`.
fn default_gap_alphas(alpha_minus: f64) -> Vec<f64> {
    let v: Vec<f64> = [alpha_minus - 0.1, alpha_minus, alpha_minus + 0.1].into_iter().filter(|a| *a > 0.0 && *a <= 1.0).collect();
    if v.is_empty() {
        vec![1.0]
    } else {
        v
    }
}
