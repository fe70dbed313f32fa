//! State-space sequence kernels: zero-order-hold discretization, the
//! step recurrence, the equivalent global-convolution form for constant
//! parameters, and the selective (input-dependent) scan.
//!
//! The state matrix is diagonal and parameterized as A = -exp(a_log), so
//! every entry stays strictly negative and exp(delta * A) stays inside
//! the unit interval for delta > 0.

use rand::Rng;

use crate::error::{err, Result};
use crate::scalar::{softplus, Scalar};
use crate::tensor::{matmul, Tensor};

/// Threshold on |delta * a| below which (exp(z) - 1) / z switches to its
/// two-term series; at 1e-6 the series truncation error is ~1e-13.
pub const ZOH_TAYLOR_THRESHOLD: f64 = 1e-6;

/// Per-channel diagonal state matrix and skip coefficient.
#[derive(Clone, Debug)]
pub struct SsmCore<T> {
    /// [channels, state_dim]; A = -exp(a_log).
    pub a_log: Tensor<T>,
    /// [channels] skip coefficient.
    pub d: Tensor<T>,
}

impl<T: Scalar> SsmCore<T> {
    pub fn state_dim(&self) -> usize {
        self.a_log.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.a_log.shape()[0]
    }

    /// Materializes A = -exp(a_log).
    pub fn a(&self) -> Tensor<T> {
        self.a_log.map(|v| -v.exp())
    }
}

/// All learnable parameters of one selective-SSM branch.
#[derive(Clone, Debug)]
pub struct S6Weights<T> {
    pub core: SsmCore<T>,
    /// [channels, dt_rank] rank-reduction of the timescale projection.
    pub w_delta_down: Tensor<T>,
    /// [dt_rank, channels].
    pub w_delta_up: Tensor<T>,
    /// [channels]; initialized so softplus(bias) lands in [1e-3, 1e-1].
    pub delta_bias: Tensor<T>,
    /// [channels, state_dim], per-token B projection (no bias).
    pub w_b: Tensor<T>,
    /// [channels, state_dim], per-token C projection (no bias).
    pub w_c: Tensor<T>,
    /// Exact ZOH for B_bar; false selects the simplified B_bar = delta * B.
    pub exact_zoh: bool,
    /// Include the D * x skip term.
    pub use_d: bool,
}

pub fn dt_rank_for(channels: usize) -> usize {
    channels.div_ceil(16).max(1)
}

impl<T: Scalar> S6Weights<T> {
    pub fn init<R: Rng>(
        channels: usize,
        state_dim: usize,
        exact_zoh: bool,
        use_d: bool,
        rng: &mut R,
    ) -> Self {
        let rank = dt_rank_for(channels);
        let mut a_log = Tensor::zeros(&[channels, state_dim]);
        for c in 0..channels {
            for n in 0..state_dim {
                a_log.data_mut()[c * state_dim + n] = T::of_f64(((n + 1) as f64).ln());
            }
        }
        let bound_c = 1.0 / (channels as f64).sqrt();
        let bound_r = 1.0 / (rank as f64).sqrt();
        let mut delta_bias = Tensor::zeros(&[channels]);
        for v in delta_bias.data_mut() {
            // softplus(bias) log-uniform in [1e-3, 1e-1]
            let dt = (rng.gen_range((1e-3f64).ln()..(1e-1f64).ln())).exp();
            *v = T::of_f64((dt.exp_m1()).ln());
        }
        S6Weights {
            core: SsmCore {
                a_log,
                d: Tensor::full(&[channels], T::one()),
            },
            w_delta_down: Tensor::uniform(&[channels, rank], bound_c, rng),
            w_delta_up: Tensor::uniform(&[rank, channels], bound_r, rng),
            delta_bias,
            w_b: Tensor::uniform(&[channels, state_dim], bound_c, rng),
            w_c: Tensor::uniform(&[channels, state_dim], bound_c, rng),
            exact_zoh,
            use_d,
        }
    }

    pub fn channels(&self) -> usize {
        self.core.channels()
    }
}

/// One discretization step: returns (a_bar, phi) with a_bar = exp(dt*a)
/// and B_bar = phi * B. Exact mode uses phi = (exp(dt*a) - 1)/a with the
/// series fallback dt*(1 + dt*a/2) near zero; simplified mode uses dt.
#[inline]
pub(crate) fn discretize_step<T: Scalar>(dt: T, a: T, exact: bool) -> (T, T) {
    let z = dt * a;
    let a_bar = z.exp();
    let phi = if !exact {
        dt
    } else if z.abs() < T::of_f64(ZOH_TAYLOR_THRESHOLD) {
        dt * (T::one() + z * T::of_f64(0.5))
    } else {
        (a_bar - T::one()) / a
    };
    (a_bar, phi)
}

/// Zero-order-hold discretization of diagonal (A, B) with timescale
/// `delta`: A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - I)
/// delta B, element-wise.
pub fn zoh_discretize<T: Scalar>(
    a_diag: &[T],
    b: &[T],
    delta: T,
) -> Result<(Vec<T>, Vec<T>)> {
    if delta <= T::zero() {
        return Err(err!(Numeric, "zoh_discretize needs delta > 0, got {delta}"));
    }
    if a_diag.len() != b.len() {
        return Err(err!(
            Shape,
            "zoh_discretize: A has {} entries, B has {}",
            a_diag.len(),
            b.len()
        ));
    }
    if !a_diag.iter().all(|v| v.is_finite()) {
        return Err(err!(Numeric, "zoh_discretize: non-finite A entry"));
    }
    let mut a_bar = Vec::with_capacity(a_diag.len());
    let mut b_bar = Vec::with_capacity(a_diag.len());
    for (&a, &bv) in a_diag.iter().zip(b) {
        let (ab, phi) = discretize_step(delta, a, true);
        a_bar.push(ab);
        b_bar.push(phi * bv);
    }
    Ok((a_bar, b_bar))
}

/// Discrete recurrence h_t = A_bar_t ⊙ h_{t-1} + B_bar_t x_t,
/// y_t = <C_t, h_t> + d x_t, from h = 0. Per-step parameter tensors are
/// [L, N]; x is length L.
pub fn ssm_recurrence<T: Scalar>(
    a_bar: &Tensor<T>,
    b_bar: &Tensor<T>,
    c: &Tensor<T>,
    x: &[T],
    d: T,
) -> Result<Vec<T>> {
    let len = x.len();
    let state = a_bar
        .shape()
        .get(1)
        .copied()
        .ok_or_else(|| err!(Shape, "ssm_recurrence: A_bar must be [L, N]"))?;
    for (name, t) in [("A_bar", a_bar), ("B_bar", b_bar), ("C", c)] {
        t.expect_shape(&[len, state], &format!("ssm_recurrence {name}"))?;
    }
    let mut h = vec![T::zero(); state];
    let mut y = Vec::with_capacity(len);
    for t in 0..len {
        let ab = &a_bar.data()[t * state..(t + 1) * state];
        let bb = &b_bar.data()[t * state..(t + 1) * state];
        let ct = &c.data()[t * state..(t + 1) * state];
        let mut acc = T::zero();
        for n in 0..state {
            h[n] = ab[n] * h[n] + bb[n] * x[t];
            acc += ct[n] * h[n];
        }
        y.push(acc + d * x[t]);
    }
    Ok(y)
}

/// Global-convolution kernel for constant parameters:
/// K_bar[k] = <C, A_bar^k ⊙ B_bar>.
pub fn ssm_conv_kernel<T: Scalar>(
    a_bar: &[T],
    b_bar: &[T],
    c: &[T],
    len: usize,
) -> Result<Vec<T>> {
    if len < 1 {
        return Err(err!(Shape, "ssm_conv_kernel needs L >= 1"));
    }
    if a_bar.len() != b_bar.len() || a_bar.len() != c.len() {
        return Err(err!(Shape, "ssm_conv_kernel: parameter length mismatch"));
    }
    let mut powers: Vec<T> = b_bar.to_vec();
    let mut kernel = Vec::with_capacity(len);
    for k in 0..len {
        if k > 0 {
            for (p, &a) in powers.iter_mut().zip(a_bar) {
                *p = *p * a;
            }
        }
        let mut acc = T::zero();
        for (&cv, &p) in c.iter().zip(&powers) {
            acc += cv * p;
        }
        kernel.push(acc);
    }
    Ok(kernel)
}

/// Causal convolution y[t] = sum_{k<=t} K_bar[k] x[t-k].
pub fn ssm_conv_apply<T: Scalar>(kernel: &[T], x: &[T]) -> Result<Vec<T>> {
    if kernel.len() != x.len() {
        return Err(err!(
            Shape,
            "ssm_conv_apply: kernel length {} vs sequence length {}",
            kernel.len(),
            x.len()
        ));
    }
    let len = x.len();
    let mut y = vec![T::zero(); len];
    for (t, out) in y.iter_mut().enumerate() {
        let mut acc = T::zero();
        for k in 0..=t {
            acc += kernel[k] * x[t - k];
        }
        *out = acc;
    }
    Ok(y)
}

/// Selective scan intermediates computed from a token sequence [L, C].
pub(crate) struct SelectiveInputs<T> {
    pub delta: Tensor<T>, // [L, C], softplus already applied
    pub b_seq: Tensor<T>, // [L, N]
    pub c_seq: Tensor<T>, // [L, N]
}

pub(crate) fn selective_inputs<T: Scalar>(
    weights: &S6Weights<T>,
    x: &Tensor<T>,
) -> SelectiveInputs<T> {
    let channels = weights.channels();
    let len = x.shape()[0];
    let low = matmul(x, &weights.w_delta_down);
    let raw = matmul(&low, &weights.w_delta_up);
    let mut delta = Tensor::zeros(&[len, channels]);
    for (o, (&r, &bias)) in delta.data_mut().iter_mut().zip(
        raw.data()
            .iter()
            .zip(weights.delta_bias.data().iter().cycle()),
    ) {
        *o = softplus(r + bias);
    }
    SelectiveInputs {
        delta,
        b_seq: matmul(x, &weights.w_b),
        c_seq: matmul(x, &weights.w_c),
    }
}

/// Core scan loop shared by the plain API and the autodiff op. Returns the
/// outputs (without the D skip) and the full state history [L, C, N] used
/// by the backward pass.
pub(crate) fn scan_forward<T: Scalar>(
    x: &Tensor<T>,      // [L, C]
    delta: &Tensor<T>,  // [L, C]
    b_seq: &Tensor<T>,  // [L, N]
    c_seq: &Tensor<T>,  // [L, N]
    a: &Tensor<T>,      // [C, N]
    exact: bool,
) -> (Tensor<T>, Vec<T>) {
    let (len, channels) = (x.shape()[0], x.shape()[1]);
    let state = a.shape()[1];
    let mut y = vec![T::zero(); len * channels];
    let mut h_all = vec![T::zero(); len * channels * state];
    let xd = x.data();
    let dd = delta.data();
    let bd = b_seq.data();
    let cd = c_seq.data();
    let ad = a.data();
    let mut h = vec![T::zero(); state];
    for ch in 0..channels {
        let arow = &ad[ch * state..(ch + 1) * state];
        h.iter_mut().for_each(|v| *v = T::zero());
        for t in 0..len {
            let xv = xd[t * channels + ch];
            let dt = dd[t * channels + ch];
            let brow = &bd[t * state..(t + 1) * state];
            let crow = &cd[t * state..(t + 1) * state];
            let hrow = &mut h_all[(t * channels + ch) * state..(t * channels + ch + 1) * state];
            let mut acc = T::zero();
            for n in 0..state {
                let (a_bar, phi) = discretize_step(dt, arow[n], exact);
                h[n] = a_bar * h[n] + phi * brow[n] * xv;
                hrow[n] = h[n];
                acc += crow[n] * h[n];
            }
            y[t * channels + ch] = acc;
        }
    }
    (Tensor::from_vec(&[len, channels], y), h_all)
}

pub(crate) struct ScanGrads<T> {
    pub gx: Tensor<T>,
    pub gdelta: Tensor<T>,
    pub gb: Tensor<T>,
    pub gc: Tensor<T>,
    pub ga: Tensor<T>,
}

/// Reverse pass of `scan_forward`. `h_all` is the saved state history.
pub(crate) fn scan_backward<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    delta: &Tensor<T>,
    b_seq: &Tensor<T>,
    c_seq: &Tensor<T>,
    a: &Tensor<T>,
    exact: bool,
    h_all: &[T],
) -> ScanGrads<T> {
    let (len, channels) = (x.shape()[0], x.shape()[1]);
    let state = a.shape()[1];
    let mut gx = Tensor::zeros(&[len, channels]);
    let mut gdelta = Tensor::zeros(&[len, channels]);
    let mut gb = Tensor::zeros(&[len, state]);
    let mut gc = Tensor::zeros(&[len, state]);
    let mut ga = Tensor::zeros(&[channels, state]);
    let xd = x.data();
    let dd = delta.data();
    let bd = b_seq.data();
    let cd = c_seq.data();
    let ad = a.data();
    let gyd = gy.data();
    let taylor = T::of_f64(ZOH_TAYLOR_THRESHOLD);
    let half = T::of_f64(0.5);
    let mut dh = vec![T::zero(); state];
    for ch in 0..channels {
        let arow = &ad[ch * state..(ch + 1) * state];
        dh.iter_mut().for_each(|v| *v = T::zero());
        for t in (0..len).rev() {
            let xv = xd[t * channels + ch];
            let dt = dd[t * channels + ch];
            let gyv = gyd[t * channels + ch];
            let brow = &bd[t * state..(t + 1) * state];
            let crow = &cd[t * state..(t + 1) * state];
            let hrow = &h_all[(t * channels + ch) * state..(t * channels + ch + 1) * state];
            let mut gx_acc = T::zero();
            let mut gdt_acc = T::zero();
            for n in 0..state {
                let a_n = arow[n];
                let z = dt * a_n;
                let a_bar = z.exp();
                let (phi, dphi_ddt, dphi_da) = if !exact {
                    (dt, T::one(), T::zero())
                } else if z.abs() < taylor {
                    (dt * (T::one() + z * half), T::one() + z, dt * dt * half)
                } else {
                    let phi = (a_bar - T::one()) / a_n;
                    (phi, a_bar, (dt * a_bar * a_n - a_bar + T::one()) / (a_n * a_n))
                };
                // y[t] = <C_t, h_t>
                gc.data_mut()[t * state + n] += gyv * hrow[n];
                let dh_n = dh[n] + gyv * crow[n];
                // h_t = a_bar h_{t-1} + phi B x
                let h_prev = if t == 0 {
                    T::zero()
                } else {
                    h_all[((t - 1) * channels + ch) * state + n]
                };
                let da_bar = dh_n * h_prev;
                let dphi = dh_n * brow[n] * xv;
                gb.data_mut()[t * state + n] += dh_n * phi * xv;
                gx_acc += dh_n * phi * brow[n];
                // a_bar = exp(dt * a)
                gdt_acc += da_bar * a_n * a_bar + dphi * dphi_ddt;
                ga.data_mut()[ch * state + n] += da_bar * dt * a_bar + dphi * dphi_da;
                dh[n] = dh_n * a_bar;
            }
            gx.data_mut()[t * channels + ch] += gx_acc;
            gdelta.data_mut()[t * channels + ch] += gdt_acc;
        }
    }
    ScanGrads {
        gx,
        gdelta,
        gb,
        gc,
        ga,
    }
}

/// Selective scan over a token sequence [L, channels]: per token,
/// delta = softplus of a rank-reduced projection, B and C are linear
/// projections, then the channel-wise recurrence plus the D skip.
pub fn selective_scan<T: Scalar>(weights: &S6Weights<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let channels = weights.channels();
    if x.shape().len() != 2 || x.shape()[1] != channels {
        return Err(err!(
            Shape,
            "selective_scan: tokens {:?} do not match {channels} channels",
            x.shape()
        ));
    }
    let inputs = selective_inputs(weights, x);
    let a = weights.core.a();
    let (mut y, _) = scan_forward(x, &inputs.delta, &inputs.b_seq, &inputs.c_seq, &a, weights.exact_zoh);
    if weights.use_d {
        let dvec = weights.core.d.data();
        for (row, xrow) in y
            .data_mut()
            .chunks_mut(channels)
            .zip(x.data().chunks(channels))
        {
            for ((o, &xv), &dv) in row.iter_mut().zip(xrow).zip(dvec) {
                *o += dv * xv;
            }
        }
    }
    if !y.all_finite() {
        return Err(err!(Numeric, "selective_scan produced a non-finite value"));
    }
    Ok(y)
}
