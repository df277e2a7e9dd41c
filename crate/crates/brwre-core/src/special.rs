//! Hurwitz zeta by Euler–Maclaurin summation.

use libm::pow;

const BERNOULLI: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// `Σ_{k≥0} (k + a)^{−s}` for `s > 1`, `a > 0`.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0, "hurwitz_zeta needs s > 1 and a > 0");
    const N: usize = 24;
    let mut head = crate::lattice::Sum::new();
    for k in 0..N {
        head.add(pow(a + k as f64, -s));
    }
    let x = a + N as f64;
    let mut tail = pow(x, 1.0 - s) / (s - 1.0) + 0.5 * pow(x, -s);
    // term_j = B_{2j}/(2j)! · s(s+1)…(s+2j−2) · x^{−s−2j+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut xpow = pow(x, -s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        tail += b / fact * rising * xpow;
        let k = 2.0 * (j as f64 + 1.0);
        rising *= (s + k - 1.0) * (s + k);
        fact *= (k + 1.0) * (k + 2.0);
        xpow /= x * x;
    }
    head.add(tail);
    head.value()
}

pub fn zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}
