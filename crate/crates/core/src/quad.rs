//! Adaptive Gauss–Kronrod (7/15) quadrature for smooth integrands on a
//! finite interval. Used as the fallback route for transition covariances
//! when the closed forms lose too many digits to cancellation.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

/// Integrates several functions sharing one set of abscissae. `f` writes the
/// integrand values at `t` into its output slice.
pub fn integrate_many<const K: usize>(
    f: &impl Fn(f64, &mut [f64; K]),
    a: f64,
    b: f64,
    rel_tol: f64,
) -> [f64; K] {
    let (whole, _) = gk15(f, a, b);
    let scale: f64 = whole.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut out = [0.0; K];
    refine(f, a, b, rel_tol, scale, 0, &mut out);
    out
}

#[cfg(test)]
/// Integrates a scalar function over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate_many::<1>(&|t, out: &mut [f64; 1]| out[0] = f(t), a, b, rel_tol)[0]
}

fn refine<const K: usize>(
    f: &impl Fn(f64, &mut [f64; K]),
    a: f64,
    b: f64,
    rel_tol: f64,
    scale: f64,
    depth: u32,
    acc: &mut [f64; K],
) {
    let (kronrod, err) = gk15(f, a, b);
    let worst = err.iter().fold(0.0_f64, |m, e| m.max(*e));
    let magnitude = kronrod.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let good = worst <= rel_tol * magnitude.max(f64::MIN_POSITIVE)
        || worst <= 1e-3 * rel_tol * scale
        || depth >= MAX_DEPTH;
    if good {
        for (s, v) in acc.iter_mut().zip(kronrod) {
            *s += v;
        }
        return;
    }
    let mid = 0.5 * (a + b);
    refine(f, a, mid, rel_tol, scale, depth + 1, acc);
    refine(f, mid, b, rel_tol, scale, depth + 1, acc);
}

fn gk15<const K: usize>(f: &impl Fn(f64, &mut [f64; K]), a: f64, b: f64) -> ([f64; K], [f64; K]) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; K];
    let mut gauss = [0.0; K];
    let mut lo = [0.0; K];
    let mut hi = [0.0; K];

    f(center, &mut lo);
    for k in 0..K {
        kronrod[k] = WGK[7] * lo[k];
        gauss[k] = WG[3] * lo[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        f(center - dx, &mut lo);
        f(center + dx, &mut hi);
        for k in 0..K {
            let pair = lo[k] + hi[k];
            kronrod[k] += WGK[j] * pair;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * pair;
            }
        }
    }
    let mut err = [0.0; K];
    for k in 0..K {
        kronrod[k] *= half;
        gauss[k] *= half;
        err[k] = (kronrod[k] - gauss[k]).abs();
    }
    (kronrod, err)
}
