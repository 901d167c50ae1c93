//! Running costs `f(t, x, u, v)` on finite action sets.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Evaluator = Arc<dyn Fn(f64, f64, usize, usize) -> f64 + Send + Sync>;

/// Names accepted by [`PayoffSpec::builtin`].
pub const BUILTIN_SPECS: &[&str] = &["matching-pennies-x", "bimodal-pursuit", "pennies", "position"];

/// Payoff of the minimizing (informed) player.
#[derive(Clone)]
pub struct PayoffSpec {
    name: String,
    n_u: usize,
    n_v: usize,
    c: f64,
    horizon: (f64, f64),
    eval: Evaluator,
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PayoffSpec")
            .field("name", &self.name)
            .field("n_u", &self.n_u)
            .field("n_v", &self.n_v)
            .field("c", &self.c)
            .field("horizon", &self.horizon)
            .finish()
    }
}

const PENNIES: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];
const PURSUIT_RIGHT: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 0.0]];
const PURSUIT_LEFT: [[f64; 2]; 2] = [[0.0, 0.0], [0.0, 1.0]];

impl PayoffSpec {
    /// `c` is both the bound on `|f|` and its Lipschitz constant in `(t, x)`.
    pub fn new(
        name: impl Into<String>,
        n_u: usize,
        n_v: usize,
        c: f64,
        horizon: (f64, f64),
        eval: impl Fn(f64, f64, usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if n_u == 0 || n_v == 0 {
            return Err(Error::InvalidSpec("action sets must be nonempty".into()));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidSpec(format!("constant {c} must be finite and nonnegative")));
        }
        if !(horizon.0 < horizon.1) {
            return Err(Error::InvalidSpec("empty horizon".into()));
        }
        Ok(Self {
            name: name.into(),
            n_u,
            n_v,
            c,
            horizon,
            eval: Arc::new(eval),
        })
    }

    /// Built-in registry. `half_width` is the grid's `L`, which bounds `|x|`.
    pub fn builtin(name: &str, half_width: f64, horizon: (f64, f64)) -> Result<Self> {
        match name {
            "matching-pennies-x" => Self::new(name, 2, 2, half_width.max(1.0), horizon, |_, x, u, v| {
                x * PENNIES[u][v]
            }),
            "bimodal-pursuit" => Self::new(name, 2, 2, 1.0, horizon, |_, x, u, v| {
                let a = 0.5 * (1.0 + x.tanh());
                a * PURSUIT_RIGHT[u][v] + (1.0 - a) * PURSUIT_LEFT[u][v]
            }),
            "pennies" => Self::new(name, 2, 2, 1.0, horizon, |_, _, u, v| PENNIES[u][v]),
            "position" => Self::new(name, 1, 1, half_width.max(1.0), horizon, |_, x, _, _| x),
            _ => Err(Error::UnknownSpec(name.to_string())),
        }
    }

    /// Table spec from `t,x,u,v,f` rows, bilinear in `(t, x)` and constant outside the knots.
    pub fn from_table_reader<R: Read>(name: impl Into<String>, r: R, horizon: (f64, f64)) -> Result<Self> {
        let table = Table::read(r)?;
        let c = table.constant();
        let (n_u, n_v) = (table.n_u, table.n_v);
        Self::new(name, n_u, n_v, c, horizon, move |t, x, u, v| table.eval(t, x, u, v))
    }

    pub fn from_table_file(path: &Path, horizon: (f64, f64)) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_table_reader(path.display().to_string(), file, horizon)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn eval(&self, t: f64, x: f64, u: usize, v: usize) -> f64 {
        (self.eval)(t, x, u, v)
    }

    pub fn with_horizon(mut self, horizon: (f64, f64)) -> Result<Self> {
        if !(horizon.0 < horizon.1) {
            return Err(Error::InvalidSpec("empty horizon".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// `a f + b` with `a > 0`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidSpec("scale must be positive".into()));
        }
        let inner = self.eval.clone();
        Self::new(
            format!("{}*{a}+{b}", self.name),
            self.n_u,
            self.n_v,
            a * self.c + b.abs(),
            self.horizon,
            move |t, x, u, v| a * inner(t, x, u, v) + b,
        )
    }

    pub fn in_horizon(&self, t: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.horizon.1.abs());
        t >= self.horizon.0 - tol && t <= self.horizon.1 + tol
    }
}

struct Table {
    ts: Vec<f64>,
    xs: Vec<f64>,
    n_u: usize,
    n_v: usize,
    /// Indexed `[u][v][it][ix]`, flattened.
    values: Vec<f64>,
}

fn knot_index(knots: &[f64], v: f64) -> usize {
    knots.iter().position(|k| *k == v).expect("knot present")
}

/// Cell index and local coordinate of `v`, clamped to the knot range.
fn locate(knots: &[f64], v: f64) -> (usize, f64) {
    if knots.len() == 1 || v <= knots[0] {
        return (0, 0.0);
    }
    let last = knots.len() - 1;
    if v >= knots[last] {
        return (last - 1, 1.0);
    }
    let k = knots.partition_point(|&q| q <= v) - 1;
    (k, (v - knots[k]) / (knots[k + 1] - knots[k]))
}

impl Table {
    fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected = ["t", "x", "u", "v", "f"];
        if headers.len() != 5 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse("payoff table header must be t,x,u,v,f".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::Parse(format!("column {k}: {e}")))
            };
            let idx = |k: usize| -> Result<usize> {
                rec[k].parse::<usize>().map_err(|e| Error::Parse(format!("column {k}: {e}")))
            };
            rows.push((num(0)?, num(1)?, idx(2)?, idx(3)?, num(4)?));
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty payoff table".into()));
        }
        let mut ts: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut ts, &mut xs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let n_u = rows.iter().map(|r| r.2).max().unwrap() + 1;
        let n_v = rows.iter().map(|r| r.3).max().unwrap() + 1;
        let (nt, nx) = (ts.len(), xs.len());
        let mut values = vec![f64::NAN; n_u * n_v * nt * nx];
        for &(t, x, u, v, f) in &rows {
            let at = ((u * n_v + v) * nt + knot_index(&ts, t)) * nx + knot_index(&xs, x);
            values[at] = f;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("payoff table does not cover every (t, x, u, v) knot".into()));
        }
        Ok(Self {
            ts,
            xs,
            n_u,
            n_v,
            values,
        })
    }

    fn at(&self, u: usize, v: usize, it: usize, ix: usize) -> f64 {
        self.values[((u * self.n_v + v) * self.ts.len() + it) * self.xs.len() + ix]
    }

    fn eval(&self, t: f64, x: f64, u: usize, v: usize) -> f64 {
        let (it, a) = locate(&self.ts, t);
        let (ix, b) = locate(&self.xs, x);
        let it1 = (it + 1).min(self.ts.len() - 1);
        let ix1 = (ix + 1).min(self.xs.len() - 1);
        let lo = (1.0 - b) * self.at(u, v, it, ix) + b * self.at(u, v, it, ix1);
        let hi = (1.0 - b) * self.at(u, v, it1, ix) + b * self.at(u, v, it1, ix1);
        (1.0 - a) * lo + a * hi
    }

    /// Largest of the bound and the knot-to-knot slopes in `t` and `x`.
    fn constant(&self) -> f64 {
        let mut c = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for u in 0..self.n_u {
            for v in 0..self.n_v {
                for it in 0..self.ts.len() {
                    for ix in 0..self.xs.len() {
                        if ix + 1 < self.xs.len() {
                            let s = (self.at(u, v, it, ix + 1) - self.at(u, v, it, ix)) / (self.xs[ix + 1] - self.xs[ix]);
                            c = c.max(s.abs());
                        }
                        if it + 1 < self.ts.len() {
                            let s = (self.at(u, v, it + 1, ix) - self.at(u, v, it, ix)) / (self.ts[it + 1] - self.ts[it]);
                            c = c.max(s.abs());
                        }
                    }
                }
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        for name in BUILTIN_SPECS {
            let s = PayoffSpec::builtin(name, 8.0, (0.0, 1.0)).unwrap();
            assert_eq!(s.name(), *name);
        }
        assert!(matches!(
            PayoffSpec::builtin("nope", 8.0, (0.0, 1.0)),
            Err(Error::UnknownSpec(_))
        ));
        let s = PayoffSpec::builtin("matching-pennies-x", 8.0, (0.0, 1.0)).unwrap();
        assert_eq!(s.eval(0.0, 2.0, 0, 1), -2.0);
        assert_eq!(s.c(), 8.0);
    }

    #[test]
    fn declared_constants_hold_on_samples() {
        for name in BUILTIN_SPECS {
            let s = PayoffSpec::builtin(name, 8.0, (0.0, 1.0)).unwrap();
            for k in 0..200 {
                let x = -8.0 + 16.0 * (k as f64 * 0.618_033_988_7).fract();
                let y = -8.0 + 16.0 * (k as f64 * 0.414_213_562_3).fract();
                for u in 0..s.n_u() {
                    for v in 0..s.n_v() {
                        assert!(s.eval(0.3, x, u, v).abs() <= s.c() + 1e-12);
                        let d = (s.eval(0.3, x, u, v) - s.eval(0.3, y, u, v)).abs();
                        assert!(d <= s.c() * (x - y).abs() + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn table_spec_interpolates() {
        let text = "t,x,u,v,f\n0,-1,0,0,0\n0,1,0,0,2\n1,-1,0,0,1\n1,1,0,0,3\n";
        let s = PayoffSpec::from_table_reader("tab", text.as_bytes(), (0.0, 1.0)).unwrap();
        assert_eq!((s.n_u(), s.n_v()), (1, 1));
        assert!((s.eval(0.5, 0.0, 0, 0) - 1.5).abs() < 1e-15);
        assert_eq!(s.eval(0.0, -5.0, 0, 0), 0.0);
        assert_eq!(s.eval(2.0, 5.0, 0, 0), 3.0);
        assert_eq!(s.c(), 3.0);
        let gap = "t,x,u,v,f\n0,-1,0,0,0\n0,1,1,0,2\n";
        assert!(PayoffSpec::from_table_reader("tab", gap.as_bytes(), (0.0, 1.0)).is_err());
        assert!(PayoffSpec::from_table_reader("tab", "a,b\n1,2\n".as_bytes(), (0.0, 1.0)).is_err());
    }
}
