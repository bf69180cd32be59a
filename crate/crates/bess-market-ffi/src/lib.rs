//! C ABI over the battery/market model.
//!
//! Conventions: every fallible call returns a [`BessStatus`] and writes its
//! result through out-pointers; `BessStatus_Ok` (0) means the outputs are
//! valid. Demand distributions live behind the opaque [`BessDemand`] handle,
//! created by one of the `bess_demand_*_new` constructors and released with
//! `bess_demand_free`. A human-readable message for the most recent failure
//! on the current thread is available via `bess_last_error_message`.
//!
//! The matching header, `include/bess_market.h`, is generated by the build
//! script and committed so pure-C builds need no Rust toolchain.

use std::cell::RefCell;
use std::ffi::{CString, c_char};

use bess_market::Error;
use bess_market::demand::{DemandMoments, JointDemand};
use bess_market::market::SupplyCurve;
use bess_market::regimes;

/// Result of every fallible call in this ABI.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BessStatus {
    /// Success; all out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A parameter was outside its domain (see `bess_last_error_message`).
    InvalidParameter = 2,
    /// The inputs describe a degenerate instance with no unique answer.
    Degenerate = 3,
    /// The quantity exists but has no closed form for this distribution.
    NotClosedForm = 4,
    /// Input data could not be read or parsed.
    DataError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(error: &Error) -> BessStatus {
    let message = error.to_string();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            CString::new(message).unwrap_or_else(|_| CString::new("invalid message").unwrap());
    });
    match error {
        Error::InvalidParameter(_) => BessStatus::InvalidParameter,
        Error::Degenerate(_) => BessStatus::Degenerate,
        Error::NotClosedForm(_) => BessStatus::NotClosedForm,
        Error::Ingest { .. } | Error::Io { .. } => BessStatus::DataError,
    }
}

fn remember_null(what: &str) -> BessStatus {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(format!("{what} must not be null")).unwrap();
    });
    BessStatus::NullPointer
}

/// Copies the most recent error message on this thread into `buffer`
/// (NUL-terminated, truncated to `capacity`). Returns the full length of
/// the message including the terminator, so callers can retry with a larger
/// buffer; a null `buffer` or zero `capacity` just queries that length.
///
/// # Safety
/// Unless null, `buffer` must point to `capacity` writable bytes.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
                // Guarantee termination even when truncating.
                *buffer.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn bess_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A joint distribution of the two daily demands. Opaque.
pub struct BessDemand {
    inner: JointDemand,
}

/// First and second moments of the two-period demand.
///
/// `rho` is the correlation between the periods; `rho_s` is the share of
/// second-period standard deviation that the first-period observation
/// reveals (equal to |rho| when demand is jointly normal).
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub rho_s: f64,
}

/// Affine marginal-cost curve with a fast-responding fleet share.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessSupplyCurve {
    /// Marginal cost at zero output.
    pub alpha: f64,
    /// Marginal-cost slope.
    pub beta: f64,
    /// Share of the fleet that can adjust in real time, in (0, 1].
    pub k_f: f64,
}

/// Conditional mean and variance of second-period demand given the first.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessConditionalMoments {
    pub mean: f64,
    pub variance: f64,
}

/// How a profit-maximizing battery distorts its dispatch relative to a
/// cost-minimizing one. All three values are fractions in [0, 1].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessDistortions {
    /// Fraction of the cost-minimizing arbitrage volume withheld.
    pub quantity_withholding: f64,
    /// Fraction of the strategic volume moved from day-ahead to real time.
    pub shift_da_to_rt: f64,
    /// Reduction in the response to real-time demand surprises.
    pub rt_responsiveness_reduction: f64,
}

/// Expected generation costs under the three operating regimes, the savings
/// each battery achieves, and the efficiency loss from strategic operation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessRegimeReport {
    pub cost_no_battery: f64,
    pub cost_centralized: f64,
    pub cost_decentralized: f64,
    pub gap_centralized: f64,
    pub gap_decentralized: f64,
    /// Ratio of achievable to realized savings; meaningful only when
    /// `price_of_anarchy_defined` is true (it is NaN otherwise).
    pub price_of_anarchy: f64,
    pub price_of_anarchy_defined: bool,
    pub distortions: BessDistortions,
}

fn curve_from(c: &BessSupplyCurve) -> Result<SupplyCurve, Error> {
    SupplyCurve::new(c.alpha, c.beta, c.k_f)
}

fn moments_from(m: &BessMoments) -> Result<DemandMoments, Error> {
    DemandMoments::new(m.mu1, m.mu2, m.sigma1, m.sigma2, m.rho, m.rho_s)
}

fn moments_into(m: &DemandMoments) -> BessMoments {
    BessMoments {
        mu1: m.mu1,
        mu2: m.mu2,
        sigma1: m.sigma1,
        sigma2: m.sigma2,
        rho: m.rho,
        rho_s: m.rho_s,
    }
}

/// Creates a jointly normal demand distribution. `rho_s` is implied (|rho|).
///
/// # Safety
/// Unless null, `out` must be valid for writing one pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_demand_normal_new(
    mu1: f64,
    mu2: f64,
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    out: *mut *mut BessDemand,
) -> BessStatus {
    if out.is_null() {
        return remember_null("out");
    }
    match JointDemand::normal(mu1, mu2, sigma1, sigma2, rho) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(BessDemand { inner })) };
            BessStatus::Ok
        }
        Err(e) => remember(&e),
    }
}

/// Creates an empirical demand distribution from paired observations
/// `(d1[i], d2[i])`, conditioning on `bin_count` equal-mass bins of d1.
///
/// # Safety
/// Unless null, `d1` and `d2` must each point to `len` readable
/// doubles, and `out` must be valid for writing one pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_demand_empirical_new(
    d1: *const f64,
    d2: *const f64,
    len: usize,
    bin_count: usize,
    out: *mut *mut BessDemand,
) -> BessStatus {
    if out.is_null() {
        return remember_null("out");
    }
    if d1.is_null() || d2.is_null() {
        return remember_null("d1/d2");
    }
    let pairs: Vec<(f64, f64)> = unsafe {
        std::slice::from_raw_parts(d1, len)
            .iter()
            .zip(std::slice::from_raw_parts(d2, len))
            .map(|(&a, &b)| (a, b))
            .collect()
    };
    match JointDemand::empirical(pairs, bin_count) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(BessDemand { inner })) };
            BessStatus::Ok
        }
        Err(e) => remember(&e),
    }
}

/// Releases a demand handle. Null is ignored.
///
/// # Safety
/// `demand` must be null or a handle returned by a `bess_demand_*_new`
/// call that has not been freed yet; the handle is invalid afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_demand_free(demand: *mut BessDemand) {
    if !demand.is_null() {
        drop(unsafe { Box::from_raw(demand) });
    }
}

/// Reads the distribution's moments.
///
/// # Safety
/// `demand` must be null or a live handle from `bess_demand_*_new`, and
/// `out` null or valid for writing a `BessMoments`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_demand_moments(
    demand: *const BessDemand,
    out: *mut BessMoments,
) -> BessStatus {
    if demand.is_null() {
        return remember_null("demand");
    }
    if out.is_null() {
        return remember_null("out");
    }
    let m = unsafe { &*demand }.inner.moments();
    unsafe { *out = moments_into(&m) };
    BessStatus::Ok
}

/// Conditional moments of second-period demand given `d1`.
///
/// # Safety
/// `demand` must be null or a live handle from `bess_demand_*_new`, and
/// `out` null or valid for writing a `BessConditionalMoments`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_demand_conditional_moments(
    demand: *const BessDemand,
    d1: f64,
    out: *mut BessConditionalMoments,
) -> BessStatus {
    if demand.is_null() {
        return remember_null("demand");
    }
    if out.is_null() {
        return remember_null("out");
    }
    let cm = unsafe { &*demand }.inner.conditional_moments(d1);
    unsafe {
        *out = BessConditionalMoments {
            mean: cm.mean,
            variance: cm.var,
        }
    };
    BessStatus::Ok
}

/// Expected generation cost with no battery.
///
/// # Safety
/// Unless null, `out` must be valid for writing one double.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_cost_no_battery(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut f64,
) -> BessStatus {
    unsafe { cost_common(curve, moments, out, regimes::cost_no_battery) }
}

/// Expected generation cost with a cost-minimizing (centrally operated)
/// battery.
///
/// # Safety
/// Unless null, `out` must be valid for writing one double.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_cost_centralized(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut f64,
) -> BessStatus {
    unsafe { cost_common(curve, moments, out, regimes::cost_centralized) }
}

/// Expected generation cost with a profit-maximizing battery.
///
/// # Safety
/// Unless null, `out` must be valid for writing one double.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_cost_decentralized(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut f64,
) -> BessStatus {
    unsafe { cost_common(curve, moments, out, regimes::cost_decentralized) }
}

unsafe fn cost_common(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut f64,
    f: fn(&SupplyCurve, &DemandMoments) -> f64,
) -> BessStatus {
    if out.is_null() {
        return remember_null("out");
    }
    let curve = match curve_from(&curve) {
        Ok(c) => c,
        Err(e) => return remember(&e),
    };
    let m = match moments_from(&moments) {
        Ok(m) => m,
        Err(e) => return remember(&e),
    };
    unsafe { *out = f(&curve, &m) };
    BessStatus::Ok
}

/// The three dispatch distortions of a profit-maximizing battery at fast
/// share `k_f` (they depend on nothing else).
///
/// # Safety
/// Unless null, `out` must be valid for writing a `BessDistortions`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_distortion_metrics(
    k_f: f64,
    out: *mut BessDistortions,
) -> BessStatus {
    if out.is_null() {
        return remember_null("out");
    }
    match regimes::distortion_metrics(k_f) {
        Ok(d) => {
            unsafe {
                *out = BessDistortions {
                    quantity_withholding: d.quantity_withholding,
                    shift_da_to_rt: d.shift_da_to_rt,
                    rt_responsiveness_reduction: d.rt_responsiveness_reduction,
                }
            };
            BessStatus::Ok
        }
        Err(e) => remember(&e),
    }
}

/// Ratio of centralized to decentralized savings. When the battery has
/// nothing to arbitrage the ratio is undefined: `*out_defined` is set to
/// false and `*out` to NaN (the call still succeeds).
///
/// # Safety
/// Unless null, `out` and `out_defined` must be valid for writing one
/// double and one bool respectively.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_price_of_anarchy(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut f64,
    out_defined: *mut bool,
) -> BessStatus {
    if out.is_null() || out_defined.is_null() {
        return remember_null("out/out_defined");
    }
    let curve = match curve_from(&curve) {
        Ok(c) => c,
        Err(e) => return remember(&e),
    };
    let m = match moments_from(&moments) {
        Ok(m) => m,
        Err(e) => return remember(&e),
    };
    let poa = regimes::price_of_anarchy(&curve, &m);
    unsafe {
        *out_defined = poa.is_some();
        *out = poa.unwrap_or(f64::NAN);
    }
    BessStatus::Ok
}

/// Costs, savings, distortions, and price of anarchy in one call.
///
/// # Safety
/// Unless null, `out` must be valid for writing a `BessRegimeReport`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn bess_regime_report(
    curve: BessSupplyCurve,
    moments: BessMoments,
    out: *mut BessRegimeReport,
) -> BessStatus {
    if out.is_null() {
        return remember_null("out");
    }
    let parsed_curve = match curve_from(&curve) {
        Ok(c) => c,
        Err(e) => return remember(&e),
    };
    let m = match moments_from(&moments) {
        Ok(m) => m,
        Err(e) => return remember(&e),
    };
    let r = regimes::regime_report(&parsed_curve, &m);
    unsafe {
        *out = BessRegimeReport {
            cost_no_battery: r.cost_no_battery,
            cost_centralized: r.cost_centralized,
            cost_decentralized: r.cost_decentralized,
            gap_centralized: r.gap_centralized,
            gap_decentralized: r.gap_decentralized,
            price_of_anarchy: r.price_of_anarchy.unwrap_or(f64::NAN),
            price_of_anarchy_defined: r.price_of_anarchy.is_some(),
            distortions: BessDistortions {
                quantity_withholding: r.quantity_withholding,
                shift_da_to_rt: r.shift_da_to_rt,
                rt_responsiveness_reduction: r.rt_responsiveness_reduction,
            },
        }
    };
    BessStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn version_is_a_nul_terminated_static() {
        let p = bess_version();
        assert!(!p.is_null());
        let s = unsafe { std::ffi::CStr::from_ptr(p) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn normal_demand_round_trips_through_the_handle() {
        let mut handle: *mut BessDemand = ptr::null_mut();
        let status = unsafe { bess_demand_normal_new(3.0, 1.0, 1.0, 2.0, 0.5, &mut handle) };
        assert_eq!(status, BessStatus::Ok);
        assert!(!handle.is_null());

        let mut m = BessMoments {
            mu1: 0.0,
            mu2: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            rho: 0.0,
            rho_s: 0.0,
        };
        assert_eq!(
            unsafe { bess_demand_moments(handle, &mut m) },
            BessStatus::Ok
        );
        assert_eq!((m.mu1, m.mu2, m.sigma1, m.sigma2), (3.0, 1.0, 1.0, 2.0));
        assert_eq!(m.rho, 0.5);
        assert_eq!(m.rho_s, 0.5);

        let mut cm = BessConditionalMoments {
            mean: 0.0,
            variance: 0.0,
        };
        assert_eq!(
            unsafe { bess_demand_conditional_moments(handle, 4.0, &mut cm) },
            BessStatus::Ok
        );
        // E[D2 | D1 = 4] = mu2 + rho (sigma2/sigma1)(4 - mu1) = 1 + 1 = 2.
        assert!((cm.mean - 2.0).abs() < 1e-12);
        assert!((cm.variance - 4.0 * 0.75).abs() < 1e-12);

        unsafe { bess_demand_free(handle) };
    }

    #[test]
    fn empirical_constructor_checks_pointers_and_data() {
        let d1 = [10.0, 12.0, 14.0, 16.0];
        let d2 = [6.0, 9.0, 7.0, 12.0];
        let mut handle: *mut BessDemand = ptr::null_mut();
        let status =
            unsafe { bess_demand_empirical_new(d1.as_ptr(), d2.as_ptr(), 4, 2, &mut handle) };
        assert_eq!(status, BessStatus::Ok);
        let mut m = BessMoments {
            mu1: 0.0,
            mu2: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            rho: 0.0,
            rho_s: 0.0,
        };
        assert_eq!(
            unsafe { bess_demand_moments(handle, &mut m) },
            BessStatus::Ok
        );
        assert!((m.mu1 - 13.0).abs() < 1e-12);
        assert!((m.mu2 - 8.5).abs() < 1e-12);
        unsafe { bess_demand_free(handle) };

        let status =
            unsafe { bess_demand_empirical_new(ptr::null(), d2.as_ptr(), 4, 2, &mut handle) };
        assert_eq!(status, BessStatus::NullPointer);

        // A single observation cannot define a joint distribution.
        let status =
            unsafe { bess_demand_empirical_new(d1.as_ptr(), d2.as_ptr(), 1, 2, &mut handle) };
        assert_eq!(status, BessStatus::InvalidParameter);
        let mut buf = [0i8; 256];
        let needed = unsafe { bess_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
        assert!(needed > 1);
        let message = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr().cast()) }
            .to_str()
            .unwrap();
        assert!(!message.is_empty());
    }

    #[test]
    fn null_out_pointers_are_rejected_not_dereferenced() {
        unsafe {
            assert_eq!(
                bess_demand_normal_new(0.0, 0.0, 1.0, 1.0, 0.0, ptr::null_mut()),
                BessStatus::NullPointer
            );
            assert_eq!(
                bess_demand_moments(ptr::null(), ptr::null_mut()),
                BessStatus::NullPointer
            );
            assert_eq!(
                bess_cost_no_battery(
                    BessSupplyCurve {
                        alpha: 1.0,
                        beta: 1.0,
                        k_f: 0.5
                    },
                    BessMoments {
                        mu1: 1.0,
                        mu2: 0.0,
                        sigma1: 0.0,
                        sigma2: 0.0,
                        rho: 0.0,
                        rho_s: 0.0
                    },
                    ptr::null_mut()
                ),
                BessStatus::NullPointer
            );
            assert_eq!(
                bess_distortion_metrics(0.5, ptr::null_mut()),
                BessStatus::NullPointer
            );
            bess_demand_free(ptr::null_mut()); // must be a no-op
        }
    }

    #[test]
    fn cost_and_report_match_the_core_library() {
        let curve = BessSupplyCurve {
            alpha: 1.0,
            beta: 2.0,
            k_f: 0.5,
        };
        let m = BessMoments {
            mu1: 3.0,
            mu2: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.0,
            rho_s: 0.0,
        };
        let mut nb = 0.0;
        let mut cn = 0.0;
        let mut dcn = 0.0;
        unsafe {
            assert_eq!(bess_cost_no_battery(curve, m, &mut nb), BessStatus::Ok);
            assert_eq!(bess_cost_centralized(curve, m, &mut cn), BessStatus::Ok);
            assert_eq!(bess_cost_decentralized(curve, m, &mut dcn), BessStatus::Ok);
        }
        assert_eq!(nb, 18.0);
        assert_eq!(cn, 15.0);
        assert!(cn < dcn && dcn < nb);

        let mut report = unsafe { std::mem::zeroed::<BessRegimeReport>() };
        assert_eq!(
            unsafe { bess_regime_report(curve, m, &mut report) },
            BessStatus::Ok
        );
        assert_eq!(report.cost_no_battery, nb);
        assert_eq!(report.cost_centralized, cn);
        assert_eq!(report.cost_decentralized, dcn);
        assert!(report.price_of_anarchy_defined);
        assert!((report.price_of_anarchy - 1.2810).abs() < 1e-4);
        assert!((report.distortions.quantity_withholding - 3.0 / 7.0).abs() < 1e-12);

        let mut poa = 0.0;
        let mut defined = true;
        // Useless battery: no gap, no variance.
        let flat = BessMoments {
            mu1: 2.0,
            mu2: 2.0,
            sigma1: 0.0,
            sigma2: 0.0,
            rho: 0.0,
            rho_s: 0.0,
        };
        assert_eq!(
            unsafe { bess_price_of_anarchy(curve, flat, &mut poa, &mut defined) },
            BessStatus::Ok
        );
        assert!(!defined);
        assert!(poa.is_nan());
    }

    #[test]
    fn invalid_parameters_surface_as_status_codes_with_messages() {
        let bad_curve = BessSupplyCurve {
            alpha: 1.0,
            beta: -2.0,
            k_f: 0.5,
        };
        let m = BessMoments {
            mu1: 1.0,
            mu2: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            rho: 0.0,
            rho_s: 0.0,
        };
        let mut out = 0.0;
        let status = unsafe { bess_cost_no_battery(bad_curve, m, &mut out) };
        assert_eq!(status, BessStatus::InvalidParameter);

        let needed = unsafe { bess_last_error_message(std::ptr::null_mut(), 0) };
        assert!(needed > 1, "message should be non-empty");
        let mut buf = vec![0i8; needed];
        unsafe { bess_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
        let message = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr().cast()) }
            .to_str()
            .unwrap();
        assert!(message.contains("beta"), "{message}");

        // Truncation still terminates.
        let mut tiny = [0x7fi8; 4];
        unsafe { bess_last_error_message(tiny.as_mut_ptr().cast(), tiny.len()) };
        assert_eq!(tiny[3], 0);

        let mut handle: *mut BessDemand = std::ptr::null_mut();
        let status = unsafe { bess_demand_normal_new(0.0, 0.0, -1.0, 1.0, 0.0, &mut handle) };
        assert_eq!(status, BessStatus::InvalidParameter);
        assert!(
            handle.is_null(),
            "failed constructor must not hand out a pointer"
        );
    }
}
