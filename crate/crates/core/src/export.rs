//! CSV and JSON renderings of results. Numbers use the shortest round-trip
//! representation so identical inputs give byte-identical files.

use std::fmt::Write;

use serde::Serialize;

use crate::holder::ExperimentRow;
use crate::operator::GridFunction;
use crate::takagi::CValue;
use crate::thermo::{CurvePoint, Endpoints, SpectrumEntry};

fn csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `x,value` for the nodes of a grid function.
pub fn grid_csv(g: &GridFunction) -> String {
    csv("x,value", g.nodes.iter().zip(&g.values).map(|(x, v)| format!("{x},{v}")))
}

/// `n,sup_residual,holder_seminorm`.
pub fn iterate_csv(residuals: &[f64], seminorms: &[f64]) -> String {
    csv(
        "n,sup_residual,holder_seminorm",
        residuals.iter().zip(seminorms).enumerate().map(|(n, (r, s))| format!("{n},{r},{s}")),
    )
}

/// `x,C_value,err_bound`.
pub fn c_csv(points: &[(f64, CValue)]) -> String {
    csv("x,C_value,err_bound", points.iter().map(|(x, c)| format!("{x},{},{}", c.value, c.err)))
}

/// `beta,t,t_prime`.
pub fn pressure_csv(points: &[CurvePoint]) -> String {
    csv("beta,t,t_prime", points.iter().map(|p| format!("{},{},{}", p.beta, p.t, p.t_prime)))
}

/// `alpha,g,beta_argmin`; empty level sets leave `g` and `beta_argmin` blank.
pub fn spectrum_csv(entries: &[SpectrumEntry]) -> String {
    csv(
        "alpha,g,beta_argmin",
        entries.iter().map(|e| match e {
            SpectrumEntry::Point(p) => format!("{},{},{}", p.alpha, p.g, p.beta_argmin),
            SpectrumEntry::Empty { alpha } => format!("{alpha},,"),
        }),
    )
}

/// `beta,alpha_pred,g,dyn_mean,dyn_sigma,emp_mean,emp_sigma,count,seed`.
pub fn experiment_csv(rows: &[ExperimentRow]) -> String {
    csv(
        "beta,alpha_pred,g,dyn_mean,dyn_sigma,emp_mean,emp_sigma,count,seed",
        rows.iter().map(|r| {
            let mut s = String::new();
            write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.beta,
                r.alpha_pred,
                r.g,
                r.dyn_mean,
                r.dyn_sigma,
                opt(r.emp_mean),
                opt(r.emp_sigma),
                r.count,
                r.seed
            )
            .expect("write to string");
            s
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThermoSummary {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub alpha_zero: f64,
    pub delta: f64,
    pub rigidity: bool,
}

impl ThermoSummary {
    pub fn new(e: &Endpoints, tol: f64) -> Self {
        ThermoSummary {
            alpha_minus: e.alpha_minus,
            alpha_plus: e.alpha_plus,
            alpha_zero: e.alpha_zero,
            delta: e.delta,
            rigidity: e.is_rigid(tol),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}
