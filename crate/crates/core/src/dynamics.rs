//! Explicit Euler integration of `ẋ = f(x) + g(x)u`, `y = h(x) + j(x)u`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::netcore::Real;
use crate::projection::{ModelParams, PointDyn, ProjectedModel, RawDynamics};

/// Any state entry above this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Initial state; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: usize) -> Self {
        Self {
            dt,
            horizon,
            x0: None,
        }
    }

    pub fn initial_state(&self, n: usize) -> Result<Vec<f64>> {
        match &self.x0 {
            Some(x0) => {
                check_dim("x0", n, x0.len())?;
                Ok(x0.clone())
            }
            None => Ok(vec![0.0; n]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampled signals on the grid `t_k = k·dt`, `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// `horizon` rows; `inputs[k]` is held over `[t_k, t_{k+1})`.
    pub inputs: Vec<Vec<f64>>,
    /// `horizon + 1` rows.
    pub outputs: Vec<Vec<f64>>,
    /// `horizon + 1` rows when recorded.
    pub states: Option<Vec<Vec<f64>>>,
}

pub fn time_grid(dt: f64, horizon: usize) -> Vec<f64> {
    (0..=horizon).map(|k| k as f64 * dt).collect()
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.states.as_ref().map(|s| s.first().map_or(0, Vec::len))
    }

    pub fn states(&self) -> Result<&[Vec<f64>]> {
        self.states.as_deref().ok_or(Error::MissingStates)
    }

    /// Input at grid point `k`; the last grid point repeats the final held input.
    pub fn input_at(&self, k: usize) -> &[f64] {
        &self.inputs[k.min(self.inputs.len() - 1)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.input_dim();
        let l = self.output_dim();
        let n = self.state_dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=l).map(|i| format!("y_{i}")));
        if let Some(n) = n {
            header.extend((1..=n).map(|i| format!("x_{i}")));
        }
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt_num(self.times[k])];
            row.extend(self.input_at(k).iter().map(|&v| fmt_num(v)));
            row.extend(self.outputs[k].iter().map(|&v| fmt_num(v)));
            if let Some(states) = &self.states {
                row.extend(states[k].iter().map(|&v| fmt_num(v)));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses the export format. `path` is used for diagnostics only.
    pub fn read_csv<R: Read>(input: R, path: &Path) -> Result<Self> {
        let fmt_err = |row: usize, msg: String| Error::Format {
            path: path.to_path_buf(),
            row,
            msg,
        };
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = r.headers().map_err(|e| fmt_err(1, e.to_string()))?.clone();
        let (m, l, n) = parse_header(&header).map_err(|msg| fmt_err(1, msg))?;
        let width = 1 + m + l + n;
        let mut times = Vec::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut states = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| fmt_err(row, e.to_string()))?;
            if rec.len() != width {
                return Err(fmt_err(
                    row,
                    format!("expected {width} columns, found {}", rec.len()),
                ));
            }
            let vals = rec
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| fmt_err(row, format!("column {}: {e}", c + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            times.push(vals[0]);
            inputs.push(vals[1..1 + m].to_vec());
            outputs.push(vals[1 + m..1 + m + l].to_vec());
            states.push(vals[1 + m + l..].to_vec());
        }
        if times.len() < 2 {
            return Err(fmt_err(
                times.len() + 1,
                "need at least two grid points".into(),
            ));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(fmt_err(3, "time column must increase".into()));
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(fmt_err(k + 2, format!("time {t} is off the uniform grid")));
            }
        }
        let horizon = times.len() - 1;
        inputs.truncate(horizon);
        Ok(Self {
            dt,
            times: time_grid(dt, horizon),
            inputs,
            outputs,
            states: (n > 0).then_some(states),
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}

/// 17 significant digits: exact round trip.
fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_header(h: &csv::StringRecord) -> std::result::Result<(usize, usize, usize), String> {
    let cols: Vec<&str> = h.iter().map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err("first column must be `t`".into());
    }
    let mut counts = [0usize; 3];
    let mut stage = 0;
    for c in &cols[1..] {
        let (prefix, idx) = c
            .split_once('_')
            .ok_or_else(|| format!("unexpected column `{c}`"))?;
        let s = match prefix {
            "u" => 0,
            "y" => 1,
            "x" => 2,
            _ => return Err(format!("unexpected column `{c}`")),
        };
        if s < stage {
            return Err(format!("column `{c}` out of order"));
        }
        stage = s;
        counts[s] += 1;
        if idx.parse::<usize>().ok() != Some(counts[s]) {
            return Err(format!("column `{c}` out of order"));
        }
    }
    Ok((counts[0], counts[1], counts[2]))
}

/// A model that can be evaluated pointwise in plain floating point.
pub trait StateSpace {
    /// `(n, m, l)`.
    fn dims(&self) -> (usize, usize, usize);
    fn point(&self, x: &[f64]) -> Result<PointDyn<f64>>;
}

impl StateSpace for ProjectedModel {
    fn dims(&self) -> (usize, usize, usize) {
        ProjectedModel::dims(self)
    }

    fn point(&self, x: &[f64]) -> Result<PointDyn<f64>> {
        self.eval_at(&self.params(), x)
    }
}

impl StateSpace for RawDynamics {
    fn dims(&self) -> (usize, usize, usize) {
        RawDynamics::dims(self)
    }

    fn point(&self, x: &[f64]) -> Result<PointDyn<f64>> {
        check_dim("state", self.f.in_dim, x.len())?;
        Ok(PointDyn {
            f: self.f.forward(x)?,
            g: self.g.forward(x)?,
            h: self.h.forward(x)?,
            j: self.j.clone(),
        })
    }
}

/// `x + dt·(f + g u)`.
pub fn euler_update<T: Real>(d: &PointDyn<T>, x: &[T], u: &[T], dt: f64) -> Vec<T> {
    x.iter()
        .zip(d.rhs(u))
        .map(|(&xi, vi)| xi + vi.scale(dt))
        .collect()
}

fn check_state<T: Real>(x: &[T], step: usize) -> Result<()> {
    if x.iter()
        .all(|v| v.value().is_finite() && v.value().abs() <= DIVERGENCE_BOUND)
    {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

pub fn euler_step<M: StateSpace + ?Sized>(
    model: &M,
    x: &[f64],
    u: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let (n, m, _) = model.dims();
    check_dim("euler_step state", n, x.len())?;
    check_dim("euler_step input", m, u.len())?;
    let next = euler_update(&model.point(x)?, x, u, dt);
    check_state(&next, 1)?;
    Ok(next)
}

pub fn simulate<M: StateSpace + ?Sized>(
    model: &M,
    u: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (n, m, _) = model.dims();
    check_dim("input signal rows", cfg.horizon, u.len())?;
    for row in u {
        check_dim("input signal width", m, row.len())?;
    }
    let mut x = cfg.initial_state(n)?;
    check_state(&x, 0)?;
    let mut states = Vec::with_capacity(cfg.horizon + 1);
    let mut outputs = Vec::with_capacity(cfg.horizon + 1);
    for k in 0..=cfg.horizon {
        let d = model.point(&x)?;
        let uk = &u[k.min(cfg.horizon - 1)];
        outputs.push(d.output(uk));
        states.push(x.clone());
        if k < cfg.horizon {
            x = euler_update(&d, &x, uk, cfg.dt);
            check_state(&x, k + 1)?;
        }
    }
    Ok(Trajectory {
        dt: cfg.dt,
        times: time_grid(cfg.dt, cfg.horizon),
        inputs: u.to_vec(),
        outputs,
        states: Some(states),
    })
}

/// Euler rollout under parameters `p` (plain values or tape variables).
/// Returns `(states, outputs)`, each with `u.len() + 1` rows.
pub fn rollout<T: Real>(
    model: &ProjectedModel,
    p: &ModelParams<T>,
    x0: &[f64],
    u: &[Vec<f64>],
    dt: f64,
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let horizon = u.len();
    if horizon == 0 {
        return Err(Error::Config("empty input signal".into()));
    }
    let mut x: Vec<T> = x0.iter().map(|&v| T::cst(v)).collect();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let uk: Vec<T> = u[k.min(horizon - 1)].iter().map(|&v| T::cst(v)).collect();
        let d = model.eval_at(p, &x)?;
        outputs.push(d.output(&uk));
        if k < horizon {
            let next = euler_update(&d, &x, &uk, dt);
            check_state(&next, k + 1)?;
            states.push(std::mem::replace(&mut x, next));
        } else {
            states.push(x.clone());
        }
    }
    Ok((states, outputs))
}
