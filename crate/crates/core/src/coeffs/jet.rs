//! Second-order forward-mode jets used to hand-code benchmark derivatives.

#[derive(Clone, Copy, Debug)]
pub(crate) struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; N], h: [[0.0; N]; N] }
    }

    /// `sin(k y_i)` and `cos(k y_i)` given `s = sin(k y_i)`, `c = cos(k y_i)`.
    pub fn trig(i: usize, k: f64, s: f64, c: f64) -> (Self, Self) {
        let mut sj = Self::constant(s);
        let mut cj = Self::constant(c);
        sj.g[i] = k * c;
        sj.h[i][i] = -k * k * s;
        cj.g[i] = -k * s;
        cj.h[i][i] = -k * k * c;
        (sj, cj)
    }

    pub fn add_const(&self, c: f64) -> Self {
        let mut r = *self;
        r.v += c;
        r
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut r = *self;
        r.v *= c;
        for a in 0..N {
            r.g[a] *= c;
            for b in 0..N {
                r.h[a][b] *= c;
            }
        }
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for a in 0..N {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
            for b in 0..N {
                r.h[a][b] = self.h[a][b] * o.v + self.g[a] * o.g[b] + o.g[a] * self.g[b] + self.v * o.h[a][b];
            }
        }
        r
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    fn compose(&self, f: f64, df: f64, d2f: f64) -> Self {
        let mut r = Self::constant(f);
        for a in 0..N {
            r.g[a] = df * self.g[a];
            for b in 0..N {
                r.h[a][b] = df * self.h[a][b] + d2f * self.g[a] * self.g[b];
            }
        }
        r
    }

    pub fn recip(&self) -> Self {
        let inv = 1.0 / self.v;
        self.compose(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.compose(s, 0.5 / s, -0.25 / (s * s * s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rule_matches_closed_form() {
        // f(y) = sqrt(2 + sin(k y0)) / (2 + sin(k y0) sin(k y1))
        let k = 2.0 * std::f64::consts::PI;
        let y = [0.13, 0.71];
        let f = |y: [f64; 2]| (2.0 + (k * y[0]).sin()).sqrt() / (2.0 + (k * y[0]).sin() * (k * y[1]).sin());
        let (s0, c0) = Jet::<2>::trig(0, k, (k * y[0]).sin(), (k * y[0]).cos());
        let (s1, _) = Jet::<2>::trig(1, k, (k * y[1]).sin(), (k * y[1]).cos());
        let _ = c0;
        let jet = s0.add_const(2.0).sqrt().mul(&s0.mul(&s1).add_const(2.0).recip());
        assert!((jet.v - f(y)).abs() < 1e-14);
        let e = 1e-5;
        for a in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[a] += e;
            ym[a] -= e;
            let fd = (f(yp) - f(ym)) / (2.0 * e);
            assert!((fd - jet.g[a]).abs() < 1e-7, "grad {a}");
            for b in 0..2 {
                let g = |mut z: [f64; 2], s: f64| {
                    z[b] += s;
                    z
                };
                let fd2 = (f(g(yp, e)) - f(g(yp, -e)) - f(g(ym, e)) + f(g(ym, -e))) / (4.0 * e * e);
                assert!((fd2 - jet.h[a][b]).abs() < 1e-3, "hess {a}{b}");
            }
        }
    }
}
