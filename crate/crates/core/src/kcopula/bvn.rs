//! Univariate and bivariate standard normal distribution functions.
//!
//! The bivariate cdf follows Genz' double-precision reworking of the
//! Drezner-Wesolowsky method (the `bvnd` routine of the tvpack sources),
//! accurate to about 1e-15 for |rho| < 1.

use libm::{asin, erfc, exp, sin, sqrt};

const FRAC_1_2_PI: f64 = 1.0 / (2.0 * std::f64::consts::PI);
const SQRT_2_PI: f64 = 2.506628274631000502415765284811;

/// Standard normal cdf.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation polished by
/// one Halley step against `norm_cdf`.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement
    let e = norm_cdf(x) - p;
    let u = e * SQRT_2_PI * exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
    x
}

/// P(X <= h, Y <= k) for standard bivariate normal with correlation rho.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    bvnd(-h, -k, rho).clamp(0.0, 1.0)
}

// Gauss-Legendre points and weights from the tvpack sources.
const QUAD_6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];
const QUAD_12: [(f64, f64); 6] = [
    (0.4717533638651177e-01, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];
const QUAD_20: [(f64, f64); 10] = [
    (0.1761400713915212e-01, -0.9931285991850949),
    (0.4060142980038694e-01, -0.9639719272779138),
    (0.6267204833410906e-01, -0.9122344282513259),
    (0.8327674157670475e-01, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.7652652113349733e-01),
];

fn select_quadrature(rho_abs: f64) -> &'static [(f64, f64)] {
    if rho_abs < 0.3 {
        &QUAD_6
    } else if rho_abs < 0.75 {
        &QUAD_12
    } else {
        &QUAD_20
    }
}

/// P(X > dh, Y > dk) for standard bivariate normal with correlation r.
pub fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let h = dh;
    let mut k = dk;
    let hk = h * k;
    let quad = select_quadrature(r.abs());
    let mut bvn = 0.0;

    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = 0.5 * asin(r);
            for (w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = sin(asr * (is * x + 1.0));
                    bvn += w * exp((sn * hk - hs) / (1.0 - sn * sn));
                }
            }
            bvn *= asr * FRAC_1_2_PI;
        }
        bvn += norm_cdf(-h) * norm_cdf(-k);
        bvn
    } else {
        if r < 0.0 {
            k = -k;
        }
        if r.abs() < 1.0 {
            let hk = if r < 0.0 { -hk } else { hk };
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = sqrt(a_s);
            let b_s = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (b_s / a_s + hk);
            if asr > -100.0 {
                bvn = a
                    * exp(asr)
                    * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0
                        + c * d * (a_s * a_s) / 5.0);
            }
            if -hk < 100.0 {
                let b = sqrt(b_s);
                bvn -= exp(-0.5 * hk)
                    * SQRT_2_PI
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
            }
            a /= 2.0;
            for (w, x) in quad {
                for is in [-1.0, 1.0] {
                    let x = a * (is * x + 1.0);
                    let x_s = x * x;
                    let r_s = sqrt(1.0 - x_s);
                    let asr = -0.5 * (b_s / x_s + hk);
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * exp(asr)
                            * (exp(-hk * (1.0 - r_s) / (2.0 * (1.0 + r_s))) / r_s
                                - (1.0 + c * x_s * (1.0 + d * x_s)));
                    }
                }
            }
            bvn *= -FRAC_1_2_PI;
        }
        if r > 0.0 {
            bvn += norm_cdf(-f64::max(h, k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += norm_cdf(k) - norm_cdf(h);
            }
        }
        bvn
    }
}
