use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Scalar types the transformer runs in. Training uses `f32`; `f64` exists
/// for finite-difference gradient checks.
pub trait Scalar: Float + Debug + Default + Sum + Send + Sync + 'static {
    /// `c = alpha * op(a) * op(b) + beta * c` for row-major matrices, where
    /// `op(a)` is `m x k` and `op(b)` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );

    /// `c = alpha * a * b + beta * c` where every operand is a strided view:
    /// element `(i, j)` of `x` lives at `x[i * rs + j * cs]`.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `e^x` in a form the compiler can vectorize.
    fn exp_fast(self) -> Self;
}

/// Range reduction to `2^n * e^r` with `|r| <= ln2 / 2`, then a degree-7
/// polynomial. Relative error stays below 2e-7 over the clamped range.
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    const ROUND: f32 = 12_582_912.0; // 1.5 * 2^23
    let x = x.max(-87.0).min(88.0);
    let shifted = x * LOG2E + ROUND;
    // low mantissa bits of `shifted` hold round(x * log2 e)
    let n_bits = shifted.to_bits().wrapping_sub(ROUND.to_bits());
    let n = shifted - ROUND;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0 + r * (1.0 / 5040.0)))))));
    p * f32::from_bits(n_bits.wrapping_add(127) << 23)
}

fn fits(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) -> bool {
    rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len
}

fn strides(rows: usize, cols: usize, trans: bool) -> (usize, usize) {
    // op(x) is rows x cols; x itself is stored row-major
    if trans {
        (1, rows)
    } else {
        (cols, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:ident, $exp:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                Self::gemm_strided(
                    m,
                    k,
                    n,
                    alpha,
                    a,
                    strides(m, k, trans_a),
                    b,
                    strides(k, n, trans_b),
                    beta,
                    c,
                    (n, 1),
                );
            }

            fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                (rsa, csa): (usize, usize),
                b: &[Self],
                (rsb, csb): (usize, usize),
                beta: Self,
                c: &mut [Self],
                (rsc, csc): (usize, usize),
            ) {
                assert!(fits(a.len(), m, k, (rsa, csa)));
                assert!(fits(b.len(), k, n, (rsb, csb)));
                assert!(fits(c.len(), m, n, (rsc, csc)));
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index reachable through the strides is in bounds (asserted above).
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }

            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline(always)]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline(always)]
            fn exp_fast(self) -> Self {
                $exp(self)
            }
        }
    };
}

impl_scalar!(f32, sgemm, exp_f32);
impl_scalar!(f64, dgemm, f64::exp);
