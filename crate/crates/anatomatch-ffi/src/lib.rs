//! C ABI for the anatomatch library: opaque volume handles, status codes,
//! and the matching entry point, so other languages can bind without
//! touching Rust types.
//!
//! Conventions:
//! * every fallible call returns an [`AmStatus`]; `AM_STATUS_OK` is 0;
//! * on failure, `am_last_error_message()` returns a thread-local C string
//!   describing the error (valid until the next failing call on the same
//!   thread);
//! * handles created by `am_volume_*` constructors must be released with
//!   `am_volume_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use anatomatch::error::ErrorClass;
use anatomatch::fixedpoint::{match_point, MatchMethod, MatchMode, MatcherConfig};
use anatomatch::geom::VoxelPoint;
use anatomatch::volume::{concat_unified, normalize, EmbeddingVolume};

/// Opaque embedding-volume handle.
pub struct AmVolume(EmbeddingVolume);

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmStatus {
    AmStatusOk = 0,
    AmStatusNullArgument = 1,
    AmStatusInvalidUtf8 = 2,
    AmStatusIo = 3,
    AmStatusValidation = 4,
    AmStatusNumerical = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmMatchMode {
    AmMatchNn = 0,
    AmMatchFixedPoint = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmMatchMethod {
    AmMethodNn = 0,
    AmMethodFixedPoint = 1,
    AmMethodFixedPointFallbackNn = 2,
}

/// Matcher settings; obtain defaults from `am_matcher_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmMatcherConfig {
    pub mode: AmMatchMode,
    pub cube_l: u64,
    pub tau_dis: f64,
    pub max_iter: u64,
    pub min_points: u64,
    pub lambda: f64,
}

/// Match output: continuous voxel coordinates (clamped into the query
/// volume), the rounded voxel, millimeter coordinates, and diagnostics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmMatchResult {
    pub voxel_z: f64,
    pub voxel_y: f64,
    pub voxel_x: f64,
    pub mm_z: f64,
    pub mm_y: f64,
    pub mm_x: f64,
    pub index_z: i64,
    pub index_y: i64,
    pub index_x: i64,
    pub method: AmMatchMethod,
    pub n_stable: u64,
    pub clamped: bool,
    pub translation_only: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn record_error(message: String, status: AmStatus) -> AmStatus {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
    status
}

fn record(err: anatomatch::Error) -> AmStatus {
    let status = match err.class() {
        ErrorClass::Io => AmStatus::AmStatusIo,
        ErrorClass::Numerical => AmStatus::AmStatusNumerical,
        _ => AmStatus::AmStatusValidation,
    };
    record_error(err.to_string(), status)
}

fn null_argument(what: &str) -> AmStatus {
    record_error(format!("null argument: {what}"), AmStatus::AmStatusNullArgument)
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, or NULL when the last
/// call succeeded. The pointer stays valid until the next failing call on
/// the same thread.
#[no_mangle]
pub extern "C" fn am_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

unsafe fn path_from(ptr_path: *const c_char) -> Result<String, AmStatus> {
    if ptr_path.is_null() {
        return Err(null_argument("path"));
    }
    CStr::from_ptr(ptr_path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| record_error("path is not valid UTF-8".into(), AmStatus::AmStatusInvalidUtf8))
}

/// Reads an AEV file into a new volume handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn am_volume_read(
    path: *const c_char,
    out: *mut *mut AmVolume,
) -> AmStatus {
    if out.is_null() {
        return null_argument("out");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match anatomatch::io::read_embedding(&path) {
        Ok(vol) => {
            *out = Box::into_raw(Box::new(AmVolume(vol)));
            AmStatus::AmStatusOk
        }
        Err(e) => record(e),
    }
}

/// Writes a volume to an AEV file (bit-exact round trip).
///
/// # Safety
/// `vol` must be a live handle from this library; `path` a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn am_volume_write(vol: *const AmVolume, path: *const c_char) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match anatomatch::io::write_embedding(&vol.0, &path) {
        Ok(()) => AmStatus::AmStatusOk,
        Err(e) => record(e),
    }
}

/// Builds a volume from a dense f32 payload in z-major, y, x, channel-last
/// order. `data_len` must equal `dims[0]*dims[1]*dims[2]*channels`.
///
/// # Safety
/// `dims` and `spacing_mm` must point to 3 readable elements, `data` to
/// `data_len` readable floats, `out` to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn am_volume_create(
    dims: *const u64,
    channels: u64,
    spacing_mm: *const f64,
    normalized: bool,
    data: *const f32,
    data_len: u64,
    out: *mut *mut AmVolume,
) -> AmStatus {
    if dims.is_null() || spacing_mm.is_null() || data.is_null() || out.is_null() {
        return null_argument("dims/spacing_mm/data/out");
    }
    let dims = std::slice::from_raw_parts(dims, 3);
    let spacing = std::slice::from_raw_parts(spacing_mm, 3);
    let payload = std::slice::from_raw_parts(data, data_len as usize).to_vec();
    match EmbeddingVolume::new(
        [dims[0] as usize, dims[1] as usize, dims[2] as usize],
        channels as usize,
        [spacing[0], spacing[1], spacing[2]],
        payload,
        normalized,
    ) {
        Ok(vol) => {
            *out = Box::into_raw(Box::new(AmVolume(vol)));
            AmStatus::AmStatusOk
        }
        Err(e) => record(e),
    }
}

/// Releases a volume handle. NULL is a no-op.
///
/// # Safety
/// `vol` must be NULL or a handle that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn am_volume_free(vol: *mut AmVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// # Safety
/// `vol` must be a live handle; `out_dims` must hold 3 writable u64.
#[no_mangle]
pub unsafe extern "C" fn am_volume_dims(vol: *const AmVolume, out_dims: *mut u64) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    if out_dims.is_null() {
        return null_argument("out_dims");
    }
    let dims = vol.0.dims();
    for (i, &d) in dims.iter().enumerate() {
        *out_dims.add(i) = d as u64;
    }
    AmStatus::AmStatusOk
}

/// # Safety
/// `vol` must be a live handle; `out_channels` writable.
#[no_mangle]
pub unsafe extern "C" fn am_volume_channels(
    vol: *const AmVolume,
    out_channels: *mut u64,
) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    if out_channels.is_null() {
        return null_argument("out_channels");
    }
    *out_channels = vol.0.channels() as u64;
    AmStatus::AmStatusOk
}

/// # Safety
/// `vol` must be a live handle; `out_spacing` must hold 3 writable f64.
#[no_mangle]
pub unsafe extern "C" fn am_volume_spacing(
    vol: *const AmVolume,
    out_spacing: *mut f64,
) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    if out_spacing.is_null() {
        return null_argument("out_spacing");
    }
    let spacing = vol.0.spacing_mm();
    for (i, &s) in spacing.iter().enumerate() {
        *out_spacing.add(i) = s;
    }
    AmStatus::AmStatusOk
}

/// Copies the embedding vector at voxel (z, y, x) into `out` (length
/// `out_len` must equal the channel count).
///
/// # Safety
/// `vol` must be a live handle; `out` must hold `out_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn am_volume_embedding_at(
    vol: *const AmVolume,
    z: i64,
    y: i64,
    x: i64,
    out: *mut f32,
    out_len: u64,
) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    if out.is_null() {
        return null_argument("out");
    }
    if out_len as usize != vol.0.channels() {
        return record_error(
            format!(
                "output buffer holds {out_len} values, volume has {} channels",
                vol.0.channels()
            ),
            AmStatus::AmStatusValidation,
        );
    }
    match vol.0.embedding_at(VoxelPoint::new(z, y, x)) {
        Ok(v) => {
            std::ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
            AmStatus::AmStatusOk
        }
        Err(e) => record(e),
    }
}

/// Unit-normalizes every voxel vector into a new handle; zero vectors map to
/// e1 and are counted in `out_zero_replaced` (may be NULL).
///
/// # Safety
/// `vol` must be a live handle; `out` writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn am_volume_normalize(
    vol: *const AmVolume,
    out: *mut *mut AmVolume,
    out_zero_replaced: *mut u64,
) -> AmStatus {
    let Some(vol) = vol.as_ref() else {
        return null_argument("vol");
    };
    if out.is_null() {
        return null_argument("out");
    }
    let outcome = normalize(&vol.0);
    if !out_zero_replaced.is_null() {
        *out_zero_replaced = outcome.zero_replaced as u64;
    }
    *out = Box::into_raw(Box::new(AmVolume(outcome.volume)));
    AmStatus::AmStatusOk
}

/// Concatenates normalized appearance and semantic volumes into the unified
/// embedding `[sqrt(lambda)*app, sqrt(1-lambda)*sem]`.
///
/// # Safety
/// `app` and `sem` must be live handles; `out` writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn am_concat_unified(
    app: *const AmVolume,
    sem: *const AmVolume,
    lambda: f64,
    out: *mut *mut AmVolume,
) -> AmStatus {
    let (Some(app), Some(sem)) = (app.as_ref(), sem.as_ref()) else {
        return null_argument("app/sem");
    };
    if out.is_null() {
        return null_argument("out");
    }
    match concat_unified(&app.0, &sem.0, lambda) {
        Ok(vol) => {
            *out = Box::into_raw(Box::new(AmVolume(vol)));
            AmStatus::AmStatusOk
        }
        Err(e) => record(e),
    }
}

/// Default matcher settings (fixed-point mode, L=5, tau_dis=2.0,
/// max_iter=20, min_points=4, lambda=0.5).
#[no_mangle]
pub extern "C" fn am_matcher_config_default() -> AmMatcherConfig {
    let d = MatcherConfig::default();
    AmMatcherConfig {
        mode: AmMatchMode::AmMatchFixedPoint,
        cube_l: d.cube_l as u64,
        tau_dis: d.tau_dis,
        max_iter: d.max_iter as u64,
        min_points: d.min_points as u64,
        lambda: d.lambda,
    }
}

/// Matches template point (z, y, x) of `template` into `query`.
///
/// # Safety
/// `template` and `query` must be live handles; `config` may be NULL for
/// defaults; `out` must point to writable result storage.
#[no_mangle]
pub unsafe extern "C" fn am_match(
    template: *const AmVolume,
    query: *const AmVolume,
    z: i64,
    y: i64,
    x: i64,
    config: *const AmMatcherConfig,
    out: *mut AmMatchResult,
) -> AmStatus {
    let (Some(template), Some(query)) = (template.as_ref(), query.as_ref()) else {
        return null_argument("template/query");
    };
    if out.is_null() {
        return null_argument("out");
    }
    let cfg = if config.is_null() {
        MatcherConfig::default()
    } else {
        let c = &*config;
        MatcherConfig {
            mode: match c.mode {
                AmMatchMode::AmMatchNn => MatchMode::Nn,
                AmMatchMode::AmMatchFixedPoint => MatchMode::FixedPoint,
            },
            cube_l: c.cube_l as usize,
            tau_dis: c.tau_dis,
            max_iter: c.max_iter as usize,
            min_points: c.min_points as usize,
            lambda: c.lambda,
            collect_traces: false,
        }
    };
    match match_point(VoxelPoint::new(z, y, x), &template.0, &query.0, &cfg) {
        Ok(result) => {
            *out = AmMatchResult {
                voxel_z: result.voxel_real[0],
                voxel_y: result.voxel_real[1],
                voxel_x: result.voxel_real[2],
                mm_z: result.mm.z,
                mm_y: result.mm.y,
                mm_x: result.mm.x,
                index_z: result.voxel.z,
                index_y: result.voxel.y,
                index_x: result.voxel.x,
                method: match result.method {
                    MatchMethod::Nn => AmMatchMethod::AmMethodNn,
                    MatchMethod::FixedPoint => AmMatchMethod::AmMethodFixedPoint,
                    MatchMethod::FixedPointFallbackNn => {
                        AmMatchMethod::AmMethodFixedPointFallbackNn
                    }
                },
                n_stable: result.n_stable as u64,
                clamped: result.clamped,
                translation_only: result.translation_only,
            };
            AmStatus::AmStatusOk
        }
        Err(e) => record(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anatomatch::testkit::random_unit_volume;

    unsafe fn handle_from(vol: &EmbeddingVolume) -> *mut AmVolume {
        let dims: Vec<u64> = vol.dims().iter().map(|&d| d as u64).collect();
        let mut out: *mut AmVolume = ptr::null_mut();
        let status = am_volume_create(
            dims.as_ptr(),
            vol.channels() as u64,
            vol.spacing_mm().as_ptr(),
            vol.is_normalized(),
            vol.data().as_ptr(),
            vol.data().len() as u64,
            &mut out,
        );
        assert_eq!(status, AmStatus::AmStatusOk);
        out
    }

    #[test]
    fn create_match_and_free() {
        let vol = random_unit_volume(3, [6, 6, 6], 8);
        unsafe {
            let handle = handle_from(&vol);
            let mut dims = [0u64; 3];
            assert_eq!(am_volume_dims(handle, dims.as_mut_ptr()), AmStatus::AmStatusOk);
            assert_eq!(dims, [6, 6, 6]);
            let cfg = am_matcher_config_default();
            let mut result = std::mem::zeroed::<AmMatchResult>();
            let status = am_match(handle, handle, 3, 2, 1, &cfg, &mut result);
            assert_eq!(status, AmStatus::AmStatusOk);
            assert_eq!(result.method, AmMatchMethod::AmMethodFixedPoint);
            assert_eq!((result.index_z, result.index_y, result.index_x), (3, 2, 1));
            // matches the direct library call
            let direct = match_point(
                VoxelPoint::new(3, 2, 1),
                &vol,
                &vol,
                &MatcherConfig::default(),
            )
            .unwrap();
            assert_eq!(result.voxel_z, direct.voxel_real[0]);
            assert_eq!(result.mm_x, direct.mm.x);
            am_volume_free(handle);
        }
    }

    #[test]
    fn file_round_trip_through_ffi() {
        let vol = random_unit_volume(9, [4, 5, 6], 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.aev");
        anatomatch::io::write_embedding(&vol, &path).unwrap();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        unsafe {
            let mut handle: *mut AmVolume = ptr::null_mut();
            assert_eq!(
                am_volume_read(c_path.as_ptr(), &mut handle),
                AmStatus::AmStatusOk
            );
            let mut channels = 0u64;
            assert_eq!(
                am_volume_channels(handle, &mut channels),
                AmStatus::AmStatusOk
            );
            assert_eq!(channels, 4);
            let mut buf = vec![0f32; 4];
            assert_eq!(
                am_volume_embedding_at(handle, 1, 2, 3, buf.as_mut_ptr(), 4),
                AmStatus::AmStatusOk
            );
            assert_eq!(
                buf.as_slice(),
                vol.embedding_at(VoxelPoint::new(1, 2, 3)).unwrap()
            );
            // write back through the FFI and compare bytes
            let out_path = dir.path().join("copy.aev");
            let c_out = CString::new(out_path.to_str().unwrap()).unwrap();
            assert_eq!(am_volume_write(handle, c_out.as_ptr()), AmStatus::AmStatusOk);
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&out_path).unwrap()
            );
            am_volume_free(handle);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        unsafe {
            let mut handle: *mut AmVolume = ptr::null_mut();
            let bad = CString::new("/nonexistent/nowhere.aev").unwrap();
            assert_eq!(
                am_volume_read(bad.as_ptr(), &mut handle),
                AmStatus::AmStatusIo
            );
            let msg = am_last_error_message();
            assert!(!msg.is_null());
            assert!(!CStr::from_ptr(msg).to_str().unwrap().is_empty());

            // bounds violations surface as validation errors
            let vol = random_unit_volume(5, [3, 3, 3], 4);
            let h = handle_from(&vol);
            let mut result = std::mem::zeroed::<AmMatchResult>();
            assert_eq!(
                am_match(h, h, 99, 0, 0, ptr::null(), &mut result),
                AmStatus::AmStatusValidation
            );
            assert_eq!(
                am_match(ptr::null(), h, 0, 0, 0, ptr::null(), &mut result),
                AmStatus::AmStatusNullArgument
            );
            am_volume_free(h);
        }
    }

    #[test]
    fn normalize_and_concat_through_ffi() {
        let app = random_unit_volume(11, [3, 3, 3], 6);
        let sem = random_unit_volume(12, [3, 3, 3], 4);
        unsafe {
            let ha = handle_from(&app);
            let hs = handle_from(&sem);
            let mut uni: *mut AmVolume = ptr::null_mut();
            assert_eq!(
                am_concat_unified(ha, hs, 0.5, &mut uni),
                AmStatus::AmStatusOk
            );
            let mut channels = 0u64;
            am_volume_channels(uni, &mut channels);
            assert_eq!(channels, 10);
            // invalid lambda is a validation error
            let mut bad: *mut AmVolume = ptr::null_mut();
            assert_eq!(
                am_concat_unified(ha, hs, 1.5, &mut bad),
                AmStatus::AmStatusValidation
            );
            am_volume_free(uni);
            am_volume_free(ha);
            am_volume_free(hs);
        }
    }
}
