//! Convergence bound of attacked FedAvg, its stated asymptotic gap, and the
//! per-round metrics CSV.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::federation::RoundRecord;

/// Constants of the PL-based convergence analysis. They are user supplied;
/// nothing here estimates them from a run. The learning-rate condition
/// `η ≤ 1/L` is not checked because `L` is not known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Initial optimality gap Θ.
    pub theta: f64,
    /// PL constant ρ.
    pub rho: f64,
    pub eta: f64,
    /// Lipschitz constant of the local losses.
    pub l_c: f64,
    /// Total data size of the benign clients.
    pub d_total: f64,
    /// Claimed data size of the attacker.
    pub d_a: f64,
    pub f_max: f64,
    pub d_t: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<()> {
        let named = [
            ("Theta", self.theta),
            ("rho", self.rho),
            ("eta", self.eta),
            ("L_c", self.l_c),
            ("D", self.d_total),
            ("D_a", self.d_a),
            ("F_max", self.f_max),
            ("d_T", self.d_t),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.d_total <= self.d_a {
            return Err(Error::Config(format!(
                "total size D = {} must exceed the attacker size D_a = {}",
                self.d_total, self.d_a
            )));
        }
        Ok(())
    }

    /// Contraction factor `ζ = 1 − ρηD²/(D − D_a)²`.
    pub fn zeta(&self) -> f64 {
        let ratio = self.d_total / (self.d_total - self.d_a);
        1.0 - self.rho * self.eta * (ratio * ratio)
    }

    /// Per-round additive term `ρηDD_a F_max/(D − D_a)²`.
    pub fn drift(&self) -> f64 {
        let gap = self.d_total - self.d_a;
        self.rho * self.eta * self.d_total * self.d_a * self.f_max / (gap * gap)
    }

    /// True when ζ lies outside (0, 1), in which case the bound says nothing.
    pub fn is_vacuous(&self) -> bool {
        let z = self.zeta();
        !(z > 0.0 && z < 1.0)
    }
}

/// `Θζᵗ + (1 − ζᵗ)/(1 − ζ) · ρηDD_a F_max/(D − D_a)²`.
pub fn convergence_bound(params: &BoundParams, t: u32) -> Result<f64> {
    params.validate()?;
    let zeta = params.zeta();
    if zeta == 1.0 {
        return Err(Error::Config(format!(
            "zeta = 1 (rho*eta*D^2 = 0 with rho = {}, eta = {}); the geometric sum divides by zero",
            params.rho, params.eta
        )));
    }
    let zt = (0..t).fold(1.0, |acc, _| acc * zeta);
    let geometric = if t == 0 { 0.0 } else { (1.0 - zt) / (1.0 - zeta) };
    Ok(params.theta * zt + geometric * params.drift())
}

/// `2 D_a L_c d_T / (D − D_a)`.
pub fn asymptotic_gap(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(2.0 * params.d_a * params.l_c * params.d_t / (params.d_total - params.d_a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Benign,
    Attacker,
    Global,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Benign => "benign",
            Role::Attacker => "attacker",
            Role::Global => "global",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "benign" => Ok(Role::Benign),
            "attacker" => Ok(Role::Attacker),
            "global" => Ok(Role::Global),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// One CSV line. The global line carries the global accuracy in
/// `local_accuracy` and zero distance and λ.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    /// Participant index, or `"global"`.
    pub participant_id: String,
    pub role: Role,
    pub local_accuracy: f64,
    pub distance_to_global: f64,
    pub lambda: f64,
    pub global_accuracy: f64,
    pub global_loss: f64,
}

pub const METRICS_HEADER: &str =
    "round,participant_id,role,local_accuracy,distance_to_global,lambda,global_accuracy,global_loss";

pub fn metrics_rows(records: &[RoundRecord]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for r in records {
        let n_benign = r.n_benign();
        for (i, (&acc, &dist)) in r.local_accuracies.iter().zip(&r.distances).enumerate() {
            let attacker = i >= n_benign;
            rows.push(MetricsRow {
                round: r.round,
                participant_id: i.to_string(),
                role: if attacker { Role::Attacker } else { Role::Benign },
                local_accuracy: acc,
                distance_to_global: dist,
                lambda: if attacker { r.lambdas[i - n_benign] } else { 0.0 },
                global_accuracy: r.global_accuracy,
                global_loss: r.global_loss,
            });
        }
        rows.push(MetricsRow {
            round: r.round,
            participant_id: "global".into(),
            role: Role::Global,
            local_accuracy: r.global_accuracy,
            distance_to_global: 0.0,
            lambda: 0.0,
            global_accuracy: r.global_accuracy,
            global_loss: r.global_loss,
        });
    }
    rows
}

pub fn format_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 160);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.round,
            r.participant_id,
            r.role,
            r.local_accuracy,
            r.distance_to_global,
            r.lambda,
            r.global_accuracy,
            r.global_loss
        ));
    }
    out
}

pub fn emit_metrics(records: &[RoundRecord], out_path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Contract("no round records to emit".into()));
    }
    let text = format_metrics(&metrics_rows(records));
    let file = fs::File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(out_path, e))?;
    w.flush().map_err(|e| Error::io(out_path, e))
}

pub fn parse_metrics(text: &str, origin: &Path) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(Error::format(origin, "missing or unexpected metrics header")),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::format(
                origin,
                format!("line {lineno}: expected 8 fields, got {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::format(origin, format!("line {lineno}, field {}: {e}", i + 1)))
        };
        rows.push(MetricsRow {
            round: fields[0]
                .parse()
                .map_err(|e| Error::format(origin, format!("line {lineno}, round: {e}")))?,
            participant_id: fields[1].to_string(),
            role: fields[2]
                .parse()
                .map_err(|e: String| Error::format(origin, format!("line {lineno}: {e}")))?,
            local_accuracy: num(3)?,
            distance_to_global: num(4)?,
            lambda: num(5)?,
            global_accuracy: num(6)?,
            global_loss: num(7)?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> BoundParams {
        BoundParams {
            theta: 1.0,
            rho: 0.1,
            eta: 0.1,
            l_c: 1.0,
            d_total: 400.0,
            d_a: 100.0,
            f_max: 2.0,
            d_t: 0.5,
        }
    }

    #[test]
    fn t_zero_is_theta() {
        assert_eq!(convergence_bound(&params(), 0).unwrap(), 1.0);
    }

    #[test]
    fn no_attacker_collapse() {
        let p = BoundParams { d_a: 0.0, ..params() };
        let mut expected = p.theta;
        for t in 0..10 {
            assert_eq!(convergence_bound(&p, t).unwrap(), expected);
            expected *= 1.0 - p.rho * p.eta;
        }
    }

    #[test]
    fn three_step_unrolling() {
        let p = params();
        let zeta = 1.0 - 0.01 * 160000.0 / 90000.0;
        let c = 0.01 * 400.0 * 100.0 * 2.0 / 90000.0;
        let mut g = 1.0;
        for _ in 0..3 {
            g = zeta * g + c;
        }
        assert!((convergence_bound(&p, 3).unwrap() - g).abs() < 1e-14);
    }

    #[test]
    fn zeta_one_is_an_error() {
        let p = BoundParams { rho: 0.0, ..params() };
        assert!(convergence_bound(&p, 3).is_err());
    }

    #[test]
    fn gap_examples() {
        assert!((asymptotic_gap(&params()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(asymptotic_gap(&BoundParams { d_a: 0.0, ..params() }).unwrap(), 0.0);
        assert!(asymptotic_gap(&BoundParams { d_a: 400.0, ..params() }).is_err());
        let sweep: Vec<f64> = (0..10)
            .map(|k| {
                asymptotic_gap(&BoundParams {
                    d_a: k as f64 * 30.0,
                    ..params()
                })
                .unwrap()
            })
            .collect();
        assert!(sweep.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn vacuous_detection() {
        assert!(!params().is_vacuous());
        assert!(BoundParams { rho: 100.0, ..params() }.is_vacuous());
    }

    #[test]
    fn empty_records_rejected() {
        let dir = std::env::temp_dir().join("fedgae-empty-metrics.csv");
        assert!(matches!(emit_metrics(&[], &dir), Err(Error::Contract(_))));
    }

    #[test]
    fn bad_header() {
        assert!(parse_metrics("round,x\n", Path::new("m.csv")).is_err());
    }
}
