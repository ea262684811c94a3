//! One-hidden-layer tanh networks with random fixed hidden weights.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::dual::{packed_index, packed_len, Dual2};
use crate::expr::Expr;
use crate::scalar::Scalar;

const MAGIC: &str = "rescert-net";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetFileError {
    #[error("cannot access net file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unsupported net file version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("net file ends early: expected {expected}")]
    Truncated { expected: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value {0:e} is not representable in the requested precision")]
    Precision(f64),
}

/// `V̂c(x) = wᵀ tanh(Ax + b) − c1·x − c0`.
///
/// `A` is `m×n` row major. The corrections `c0`, `c1` are only consistent
/// with `w` after [`ValueNet::refresh_correction`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T> {
    pub n: usize,
    pub m: usize,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub w: Vec<T>,
    pub c0: T,
    pub c1: Vec<T>,
    pub seed: u64,
    pub scale: f64,
}

pub type ValueNet64 = ValueNet<f64>;

/// Draws `A` (row major) then `b` uniformly from `[−scale, scale]`.
pub fn init_net<T: Scalar>(n: usize, m: usize, seed: u64, scale: f64) -> ValueNet<T> {
    assert!(m >= 1, "hidden width must be positive");
    assert!(scale > 0.0, "weight scale must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<T> {
        (0..len)
            .map(|_| T::from_f64_down(rng.gen_range(-scale..=scale)))
            .collect()
    };
    let a = draw(m * n);
    let b = draw(m);
    ValueNet {
        n,
        m,
        a,
        b,
        w: vec![T::zero(); m],
        c0: T::zero(),
        c1: vec![T::zero(); n],
        seed,
        scale,
    }
}

impl<T: Scalar> ValueNet<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// `Ax + b`.
    pub fn preactivations(&self, x: &[T]) -> Vec<T> {
        (0..self.m)
            .map(|i| self.row(i).iter().zip(x).fold(self.b[i], |acc, (&a, &xi)| acc + a * xi))
            .collect()
    }

    /// Sets `c0 = wᵀtanh(b)`, `c1 = Aᵀ(w ⊙ sech²(b))`.
    pub fn refresh_correction(&mut self) {
        let zero = vec![T::zero(); self.n];
        self.c0 = T::zero();
        self.c1 = vec![T::zero(); self.n];
        let d = self.eval2_raw(&zero);
        self.c0 = d.0;
        self.c1 = d.1;
    }

    pub fn corrected(mut self) -> Self {
        self.refresh_correction();
        self
    }

    // value and gradient of the corrected net, Hessian only on request
    fn eval2_raw(&self, x: &[T]) -> (T, Vec<T>, Option<Vec<T>>) {
        self.eval_parts(x, false)
    }

    fn eval_parts(&self, x: &[T], hess: bool) -> (T, Vec<T>, Option<Vec<T>>) {
        let n = self.n;
        let z = self.preactivations(x);
        let mut v = T::zero();
        let mut g = vec![T::zero(); n];
        let mut h = hess.then(|| vec![T::zero(); packed_len(n)]);
        let two = T::one() + T::one();
        for (i, &zi) in z.iter().enumerate() {
            let t = zi.tanh();
            let s = T::one() - t * t;
            v = v + self.w[i] * t;
            let ws = self.w[i] * s;
            let row = self.row(i);
            for j in 0..n {
                g[j] = g[j] + ws * row[j];
            }
            if let Some(h) = h.as_mut() {
                let c = -two * self.w[i] * t * s;
                for j in 0..n {
                    for k in j..n {
                        h[packed_index(n, j, k)] = h[packed_index(n, j, k)] + c * row[j] * row[k];
                    }
                }
            }
        }
        v = v - self.c0;
        for j in 0..n {
            v = v - self.c1[j] * x[j];
            g[j] = g[j] - self.c1[j];
        }
        (v, g, h)
    }

    /// Corrected value, gradient and Hessian in closed form.
    pub fn eval2(&self, x: &[T]) -> Dual2<T> {
        assert_eq!(x.len(), self.n, "input dimension");
        let (v, g, h) = self.eval_parts(x, true);
        Dual2 {
            v,
            g: g.into_iter().collect(),
            h: h.unwrap().into_iter().collect(),
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        self.eval_parts(x, false).0
    }

    pub fn value_and_grad(&self, x: &[T]) -> (T, Vec<T>) {
        let (v, g, _) = self.eval_parts(x, false);
        (v, g)
    }

    /// `1 − tanh²(bᵢ)` for every unit.
    pub fn sech2_at_origin(&self) -> Vec<T> {
        self.b
            .iter()
            .map(|&b| {
                let t = b.tanh();
                T::one() - t * t
            })
            .collect()
    }

    fn c(v: T) -> Expr {
        Expr::Const(v.to_f64_exact())
    }

    fn linear_terms(&self, i: usize) -> Vec<Expr> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_zero())
            .map(|(j, &a)| Expr::Var(j).scaled(a.to_f64_exact()))
            .collect()
    }

    fn preactivation_expr(&self, i: usize) -> Expr {
        let mut terms = self.linear_terms(i);
        if !self.b[i].is_zero() {
            terms.push(Self::c(self.b[i]));
        }
        Expr::sum(terms)
    }

    /// `V̂c` with the stored constants, mirroring [`ValueNet::eval2`].
    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = (0..self.m)
            .filter(|&i| !self.w[i].is_zero())
            .map(|i| self.preactivation_expr(i).tanh().scaled(self.w[i].to_f64_exact()))
            .collect();
        for j in 0..self.n {
            if !self.c1[j].is_zero() {
                terms.push(Expr::Var(j).scaled(self.c1[j].to_f64_exact()).neg());
            }
        }
        if !self.c0.is_zero() {
            terms.push(Self::c(self.c0).neg());
        }
        Expr::sum(terms)
    }

    /// `sech²(aᵢ·x + bᵢ) − sech²(bᵢ)`, both terms evaluated symbolically.
    fn centered_sech2_expr(&self, i: usize) -> Expr {
        let s = Expr::minus(Expr::Const(1.0), self.preactivation_expr(i).tanh().pow(2));
        let s0 = Expr::minus(Expr::Const(1.0), Self::c(self.b[i]).tanh().pow(2));
        Expr::minus(s, s0)
    }

    /// The corrected network written unit by unit,
    /// `Σ wᵢ (tanh(aᵢ·x + bᵢ) − tanh(bᵢ) − sech²(bᵢ) aᵢ·x)`.
    ///
    /// Mathematically this is `V̂c` with exact corrections, so its value and
    /// gradient vanish at the origin without rounding; it differs from
    /// [`ValueNet::to_expr`] only by the rounding of `c0` and `c1`. This is
    /// the form the verifier certifies.
    pub fn centered_expr(&self) -> Expr {
        let terms: Vec<Expr> = (0..self.m)
            .filter(|&i| !self.w[i].is_zero())
            .map(|i| {
                let ax = Expr::sum(self.linear_terms(i));
                let s0 = Expr::minus(Expr::Const(1.0), Self::c(self.b[i]).tanh().pow(2));
                let unit = Expr::sum(vec![
                    self.preactivation_expr(i).tanh(),
                    Self::c(self.b[i]).tanh().neg(),
                    Expr::product(vec![s0, ax]).neg(),
                ]);
                unit.scaled(self.w[i].to_f64_exact())
            })
            .collect();
        Expr::sum(terms)
    }

    /// `DV̂c(x)·v(x)` for the centered form, lowered unit by unit:
    /// `Σ wᵢ (sech²(aᵢ·x + bᵢ) − sech²(bᵢ)) (aᵢ·v)`.
    pub fn directional_expr(&self, v: &[Expr]) -> Expr {
        assert_eq!(v.len(), self.n);
        let terms: Vec<Expr> = (0..self.m)
            .filter(|&i| !self.w[i].is_zero())
            .filter_map(|i| {
                let av: Vec<Expr> = self
                    .row(i)
                    .iter()
                    .zip(v)
                    .filter(|(a, e)| !a.is_zero() && **e != Expr::Const(0.0))
                    .map(|(&a, e)| e.clone().scaled(a.to_f64_exact()))
                    .collect();
                if av.is_empty() {
                    return None;
                }
                Some(Expr::product(vec![self.centered_sech2_expr(i), Expr::sum(av)]).scaled(self.w[i].to_f64_exact()))
            })
            .collect();
        Expr::sum(terms)
    }

    /// Gradient components of the centered form.
    pub fn gradient_exprs(&self) -> Vec<Expr> {
        (0..self.n)
            .map(|j| {
                let mut e = vec![Expr::Const(0.0); self.n];
                e[j] = Expr::Const(1.0);
                self.directional_expr(&e)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let hex = |v: T| format!("{:016x}", v.to_f64_exact().to_bits());
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "m {}", self.m);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "scale {:016x}", self.scale.to_bits());
        let mut section = |name: &str, vals: &[T]| {
            let _ = writeln!(s, "{name} {}", vals.len());
            for chunk in vals.chunks(8) {
                let line: Vec<String> = chunk.iter().map(|&v| hex(v)).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        };
        section("A", &self.a);
        section("b", &self.b);
        section("w", &self.w);
        section("c0", &[self.c0]);
        section("c1", &self.c1);
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NetFileError> {
        let mut r = Reader {
            lines: text.lines().map(str::trim).collect(),
            at: 0,
        };
        let (ln, header) = r.next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(ln, "not a net file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "missing version".into()))?;
        if version != VERSION {
            return Err(NetFileError::Version { found: version });
        }
        let n = r.int("n")? as usize;
        let m = r.int("m")? as usize;
        let seed = r.int("seed")?;
        let (ln, sv) = r.field("scale")?;
        let scale = u64::from_str_radix(&sv, 16)
            .map(f64::from_bits)
            .map_err(|_| bad(ln, "bad scale".into()))?;
        let a = r.section("A", m * n)?;
        let b = r.section("b", m)?;
        let w = r.section("w", m)?;
        let c0 = r.section("c0", 1)?[0];
        let c1 = r.section("c1", n)?;
        match r.next("end")? {
            (_, "end") => {}
            (ln, _) => return Err(bad(ln, "expected `end`".into())),
        }
        Ok(ValueNet {
            n,
            m,
            a,
            b,
            w,
            c0,
            c1,
            seed,
            scale,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetFileError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetFileError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn bad(line: usize, msg: String) -> NetFileError {
    NetFileError::Malformed { line, msg }
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    at: usize,
}

impl<'a> Reader<'a> {
    // `#` lines are comments
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), NetFileError> {
        loop {
            let l = self.lines.get(self.at).ok_or_else(|| NetFileError::Truncated {
                expected: what.to_string(),
            })?;
            self.at += 1;
            if !l.starts_with('#') {
                return Ok((self.at, l));
            }
        }
    }

    fn field(&mut self, key: &str) -> Result<(usize, String), NetFileError> {
        let (ln, l) = self.next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
            _ => Err(bad(ln, format!("expected `{key}`"))),
        }
    }

    fn int(&mut self, key: &str) -> Result<u64, NetFileError> {
        let (ln, v) = self.field(key)?;
        v.parse().map_err(|_| bad(ln, format!("bad integer `{v}`")))
    }

    fn section<T: Scalar>(&mut self, name: &str, len: usize) -> Result<Vec<T>, NetFileError> {
        let (ln, count) = self.field(name)?;
        let count: usize = count.parse().map_err(|_| bad(ln, "bad count".into()))?;
        if count != len {
            return Err(NetFileError::Dimension(format!(
                "{name} has {count} entries, expected {len}"
            )));
        }
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let (ln, l) = self.next(name)?;
            for tok in l.split_whitespace() {
                let bits = u64::from_str_radix(tok, 16).map_err(|_| bad(ln, format!("bad hex `{tok}`")))?;
                let v = f64::from_bits(bits);
                if !v.is_finite() {
                    return Err(bad(ln, "non-finite weight".into()));
                }
                let t = T::from_f64_down(v);
                if t.to_f64_exact() != v {
                    return Err(NetFileError::Precision(v));
                }
                out.push(t);
            }
            if out.len() > len {
                return Err(bad(ln, format!("too many entries in {name}")));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_unit() -> ValueNet64 {
        ValueNet {
            n: 2,
            m: 1,
            a: vec![1.0, 0.0],
            b: vec![0.0],
            w: vec![1.0],
            c0: 0.0,
            c1: vec![0.0, 0.0],
            seed: 0,
            scale: 1.0,
        }
        .corrected()
    }

    #[test]
    fn single_unit_by_hand() {
        let net = one_unit();
        assert_eq!(net.c0, 0.0);
        assert_eq!(net.c1, vec![1.0, 0.0]);
        let x = [0.7, -0.2];
        assert!((net.value(&x) - (0.7f64.tanh() - 0.7)).abs() < 1e-15);
        let d = net.eval2(&[0.0, 0.0]);
        assert_eq!(d.grad(0), 0.0);
        assert_eq!(d.grad(1), 0.0);
    }

    #[test]
    fn init_is_seeded() {
        let a: ValueNet64 = init_net(2, 400, 42, 1.0);
        assert_eq!(a, init_net(2, 400, 42, 1.0));
        assert_ne!(a.a, init_net::<f64>(2, 400, 43, 1.0).a);
        assert!(a.a.iter().chain(&a.b).all(|v| v.abs() <= 1.0));
        assert!(a.w.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let mut net: ValueNet64 = init_net(2, 17, 5, 1.3);
        for (i, w) in net.w.iter_mut().enumerate() {
            *w = (i as f64).sin() * 1e3;
        }
        net.refresh_correction();
        let text = net.to_text();
        assert_eq!(ValueNet64::from_text(&text).unwrap(), net);
        let cut: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ValueNet64::from_text(&cut),
            Err(NetFileError::Truncated { .. })
        ));
        let v2 = text.replacen("rescert-net 1", "rescert-net 2", 1);
        assert!(matches!(
            ValueNet64::from_text(&v2),
            Err(NetFileError::Version { found: 2 })
        ));
        // f32 cannot hold these weights exactly
        assert!(matches!(
            ValueNet::<f32>::from_text(&text),
            Err(NetFileError::Precision(_))
        ));
    }
}
