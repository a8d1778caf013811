//! C ABI over the `eitlab` kernels, stability calculus and mesh I/O.
//!
//! Conventions:
//!
//! * every function returns an [`EitlabStatus`]; results go through out
//!   pointers, which are written only on success;
//! * objects are opaque handles created by `*_new`/`*_read` and released by
//!   the matching `*_free` (which accepts null);
//! * points are `const double[3]`, matrices `const double[9]` row major;
//! * the message of the last failure on the calling thread is available from
//!   [`eitlab_last_error`] until the next failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eitlab::geometry::{Point3, SimplicialMesh};
use eitlab::kernels::{gamma_eval, gamma_grad, AnisoTwoPhaseKernel, Side, TwoPhaseKernel};
use eitlab::stability_calculus::{delta_recursion, Branch, BudgetInputs, OmegaWeight};
use eitlab::Error;
use nalgebra::Matrix3;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EitlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Singularity = 4,
    OnInterface = 5,
    NotSpd = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

/// Side of the interface `{x3 = 0}` a gradient is taken on.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EitlabSide {
    /// Side of the evaluation point; fails on the interface.
    Auto = 0,
    Upper = 1,
    Lower = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EitlabBranch {
    Trivial = 0,
    Recursion = 1,
}

/// Inputs of the `δ_k` recursion. `iterates == 0` selects `K²`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitlabBudgetInputs {
    pub epsilon: f64,
    pub e: f64,
    pub c: f64,
    pub k: usize,
    pub n: usize,
    pub iterates: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitlabBudgetResult {
    pub final_bound: f64,
    pub lipschitz_constant: f64,
    pub branch: EitlabBranch,
    /// Length of the `δ` sequence, `K + 1`.
    pub delta_len: usize,
}

/// Isotropic two-phase kernel, contrast `k` above `{x3 = 0}`.
pub struct EitlabTwoPhaseKernel(TwoPhaseKernel<3>);

/// Anisotropic two-phase kernel for `γ A0` with contrast `k`.
pub struct EitlabAnisoKernel(AnisoTwoPhaseKernel<3>);

/// Labeled tetrahedral mesh.
pub struct EitlabMesh(SimplicialMesh);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EitlabStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => EitlabStatus::InvalidArgument,
        Error::Domain(_) => EitlabStatus::Domain,
        Error::Singularity => EitlabStatus::Singularity,
        Error::OnInterface => EitlabStatus::OnInterface,
        Error::NotSpd { .. } => EitlabStatus::NotSpd,
        Error::Io(_) => EitlabStatus::Io,
        Error::Parse { .. } | Error::Json(_) => EitlabStatus::Parse,
        _ => EitlabStatus::Internal,
    }
}

enum Fail {
    Null,
    Small(String),
    Lab(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lab(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EitlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EitlabStatus::Ok,
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            EitlabStatus::NullPointer
        }
        Ok(Err(Fail::Small(m))) => {
            set_error(m);
            EitlabStatus::BufferTooSmall
        }
        Ok(Err(Fail::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            EitlabStatus::Internal
        }
    }
}

unsafe fn read<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null)
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    p.write(v);
    Ok(())
}

unsafe fn point(p: *const f64) -> Result<Point3, Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Point3::new(s[0], s[1], s[2]))
}

unsafe fn write_point(p: *mut f64, v: &Point3) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    std::slice::from_raw_parts_mut(p, 3).copy_from_slice(v.as_slice());
    Ok(())
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lab(Error::InvalidArgument("path is not UTF-8".into())))
}

fn side(s: EitlabSide) -> Option<Side> {
    match s {
        EitlabSide::Auto => None,
        EitlabSide::Upper => Some(Side::Upper),
        EitlabSide::Lower => Some(Side::Lower),
    }
}

unsafe fn free_handle<T>(h: *mut T) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn eitlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eitlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Newtonian potential `Γ(x, y)`.
///
/// # Safety
/// `x`, `y` point to 3 doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_laplace_eval(x: *const f64, y: *const f64, out: *mut f64) -> EitlabStatus {
    guard(|| write(out, gamma_eval(&point(x)?, &point(y)?)?))
}

/// `∇_x Γ(x, y)`.
///
/// # Safety
/// `x`, `y` point to 3 doubles; `out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_laplace_grad(x: *const f64, y: *const f64, out: *mut f64) -> EitlabStatus {
    guard(|| write_point(out, &gamma_grad(&point(x)?, &point(y)?)?))
}

/// # Safety
/// `out` is writable; the handle is released with [`eitlab_two_phase_free`].
#[no_mangle]
pub unsafe extern "C" fn eitlab_two_phase_new(k: f64, out: *mut *mut EitlabTwoPhaseKernel) -> EitlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null);
        }
        let h = Box::new(EitlabTwoPhaseKernel(TwoPhaseKernel::new(k)?));
        write(out, Box::into_raw(h))
    })
}

/// # Safety
/// `h` comes from [`eitlab_two_phase_new`]; points are 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_two_phase_eval(
    h: *const EitlabTwoPhaseKernel,
    xi: *const f64,
    eta: *const f64,
    out: *mut f64,
) -> EitlabStatus {
    guard(|| write(out, read(h)?.0.eval(&point(xi)?, &point(eta)?)?))
}

/// # Safety
/// As [`eitlab_two_phase_eval`]; `out` holds 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_two_phase_grad(
    h: *const EitlabTwoPhaseKernel,
    xi: *const f64,
    eta: *const f64,
    s: EitlabSide,
    out: *mut f64,
) -> EitlabStatus {
    guard(|| write_point(out, &read(h)?.0.grad(&point(xi)?, &point(eta)?, side(s))?))
}

/// # Safety
/// `h` is null or comes from [`eitlab_two_phase_new`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn eitlab_two_phase_free(h: *mut EitlabTwoPhaseKernel) {
    free_handle(h)
}

/// `a0` is a symmetric positive definite 3×3 matrix, row major.
///
/// # Safety
/// `a0` points to 9 doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_aniso_new(a0: *const f64, k: f64, out: *mut *mut EitlabAnisoKernel) -> EitlabStatus {
    guard(|| {
        if a0.is_null() || out.is_null() {
            return Err(Fail::Null);
        }
        let m = Matrix3::from_row_slice(std::slice::from_raw_parts(a0, 9));
        let h = Box::new(EitlabAnisoKernel(AnisoTwoPhaseKernel::new(&m, k)?));
        write(out, Box::into_raw(h))
    })
}

/// # Safety
/// `h` comes from [`eitlab_aniso_new`]; points are 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_aniso_eval(
    h: *const EitlabAnisoKernel,
    xi: *const f64,
    eta: *const f64,
    out: *mut f64,
) -> EitlabStatus {
    guard(|| write(out, read(h)?.0.eval(&point(xi)?, &point(eta)?)?))
}

/// # Safety
/// As [`eitlab_aniso_eval`]; `out` holds 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_aniso_grad(
    h: *const EitlabAnisoKernel,
    xi: *const f64,
    eta: *const f64,
    s: EitlabSide,
    out: *mut f64,
) -> EitlabStatus {
    guard(|| write_point(out, &read(h)?.0.grad(&point(xi)?, &point(eta)?, side(s))?))
}

/// # Safety
/// `h` is null or comes from [`eitlab_aniso_new`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn eitlab_aniso_free(h: *mut EitlabAnisoKernel) {
    free_handle(h)
}

/// `ω_b(t)`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_omega_eval(b: f64, t: f64, out: *mut f64) -> EitlabStatus {
    guard(|| write(out, OmegaWeight::new(b)?.eval(t)?))
}

/// `j`-fold composition `ω_b^{(j)}(t)`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_omega_iterate(b: f64, j: usize, t: f64, out: *mut f64) -> EitlabStatus {
    guard(|| write(out, OmegaWeight::new(b)?.iterate(j, t)?))
}

/// Inverse of `ω_b` on `(0, e^{-2})`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_omega_inverse(b: f64, s: f64, out: *mut f64) -> EitlabStatus {
    guard(|| write(out, OmegaWeight::new(b)?.inverse(s)?))
}

/// Runs the `δ_k` recursion. When `delta` is non-null it receives the
/// sequence and must hold `delta_cap >= K + 1` doubles.
///
/// # Safety
/// `inputs`, `out` are valid; `delta` is null or holds `delta_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_delta_recursion(
    inputs: *const EitlabBudgetInputs,
    out: *mut EitlabBudgetResult,
    delta: *mut f64,
    delta_cap: usize,
) -> EitlabStatus {
    guard(|| {
        let i = read(inputs)?;
        if out.is_null() {
            return Err(Fail::Null);
        }
        let b = delta_recursion(&BudgetInputs {
            epsilon: i.epsilon,
            e: i.e,
            c: i.c,
            k: i.k,
            n: i.n,
            iterates: (i.iterates > 0).then_some(i.iterates),
        })?;
        let len = b.delta_sequence.len();
        if !delta.is_null() {
            if delta_cap < len {
                return Err(Fail::Small(format!("delta buffer holds {delta_cap}, need {len}")));
            }
            std::slice::from_raw_parts_mut(delta, len).copy_from_slice(&b.delta_sequence);
        }
        let branch = match b.branch {
            Branch::Trivial => EitlabBranch::Trivial,
            Branch::Recursion => EitlabBranch::Recursion,
        };
        write(out, EitlabBudgetResult { final_bound: b.final_bound, lipschitz_constant: b.lipschitz_constant, branch, delta_len: len })
    })
}

/// Reads a mesh text file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_read(path_: *const c_char, out: *mut *mut EitlabMesh) -> EitlabStatus {
    guard(|| {
        let p = path(path_)?;
        if out.is_null() {
            return Err(Fail::Null);
        }
        let f = File::open(p).map_err(Error::from)?;
        let m = SimplicialMesh::read_text(BufReader::new(f))?;
        write(out, Box::into_raw(Box::new(EitlabMesh(m))))
    })
}

/// Writes a mesh text file.
///
/// # Safety
/// `h` comes from [`eitlab_mesh_read`]; `path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_write(h: *const EitlabMesh, path_: *const c_char) -> EitlabStatus {
    guard(|| {
        let m = read(h)?;
        let f = File::create(path(path_)?).map_err(Error::from)?;
        m.0.write_text(BufWriter::new(f))?;
        Ok(())
    })
}

/// Vertex and element counts.
///
/// # Safety
/// `h` is a mesh handle; `n_vertices`, `n_elements` are writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_counts(h: *const EitlabMesh, n_vertices: *mut usize, n_elements: *mut usize) -> EitlabStatus {
    guard(|| {
        let m = &read(h)?.0;
        if n_vertices.is_null() || n_elements.is_null() {
            return Err(Fail::Null);
        }
        write(n_vertices, m.n_vertices())?;
        write(n_elements, m.n_elements())
    })
}

/// Coordinates of vertex `i`.
///
/// # Safety
/// `h` is a mesh handle; `out` holds 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_vertex(h: *const EitlabMesh, i: usize, out: *mut f64) -> EitlabStatus {
    guard(|| {
        let m = &read(h)?.0;
        let v = m.vertices.get(i).ok_or_else(|| Error::InvalidArgument(format!("vertex {i} out of range")))?;
        write_point(out, v)
    })
}

/// Sum of element volumes.
///
/// # Safety
/// `h` is a mesh handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_volume(h: *const EitlabMesh, out: *mut f64) -> EitlabStatus {
    guard(|| write(out, read(h)?.0.total_volume()))
}

/// Structural validation; fails on degenerate or inverted elements.
///
/// # Safety
/// `h` is a mesh handle.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_validate(h: *const EitlabMesh) -> EitlabStatus {
    guard(|| Ok(read(h)?.0.validate()?))
}

/// # Safety
/// `h` is null or comes from [`eitlab_mesh_read`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn eitlab_mesh_free(h: *mut EitlabMesh) {
    free_handle(h)
}
