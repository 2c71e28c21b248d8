//! C ABI over `kgadapt`.
//!
//! Conventions:
//! - Every fallible function returns a [`KgStatus`]; on anything but
//!   `KG_STATUS_OK` a message is available from [`kg_last_error_message`]
//!   on the same thread.
//! - Handles (`KgPkg`, `KgCatalog`) are opaque and released with their
//!   `*_free` function. Strings returned through `char **` out-parameters are
//!   owned by the caller and released with [`kg_string_free`].
//! - Input strings are NUL-terminated UTF-8. Features are written
//!   `relation:value`, e.g. `hasTag:italian`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::{Arc, OnceLock};

use kgadapt::adapt::{apply_adaptation, AdaptationPolicy, Strategy};
use kgadapt::backend::{OracleBackend, OracleWeights, RecommendationRequest, Recommender};
use kgadapt::catalog::Catalog;
use kgadapt::classify::{classify, extract_item, Category, ClassifyOptions};
use kgadapt::pie::{bias_score, detect_pies, DetectConfig};
use kgadapt::pkg::{Feature, Pkg};
use kgadapt::prompt::{build_prompt, PromptConfig};
use kgadapt::{store, tune, Error};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgStatus {
    Ok = 0,
    InvalidInput = 1,
    UndefinedScore = 2,
    Config = 3,
    Parse = 4,
    NotFound = 5,
    Internal = 6,
    Tuning = 7,
    Backend = 8,
    Io = 9,
    NullPointer = 10,
    Utf8 = 11,
    Panic = 12,
}

/// Outcome categories, mirroring the library's classification.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgCategory {
    OutPie = 0,
    InPie = 1,
    Invalid = 2,
}

impl From<Category> for KgCategory {
    fn from(c: Category) -> Self {
        match c {
            Category::OutPie => KgCategory::OutPie,
            Category::InPie => KgCategory::InPie,
            Category::Invalid => KgCategory::Invalid,
        }
    }
}

impl From<KgCategory> for Category {
    fn from(c: KgCategory) -> Self {
        match c {
            KgCategory::OutPie => Category::OutPie,
            KgCategory::InPie => Category::InPie,
            KgCategory::Invalid => Category::Invalid,
        }
    }
}

/// A user's PKG.
pub struct KgPkg {
    pkg: Pkg,
}

/// A catalog, with a lazily built oracle recommender.
pub struct KgCatalog {
    catalog: Arc<Catalog>,
    oracle: OnceLock<OracleBackend>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_of(e: &Error) -> KgStatus {
    match e.category() {
        "invalid-input" => KgStatus::InvalidInput,
        "undefined-score" => KgStatus::UndefinedScore,
        "config" => KgStatus::Config,
        "parse" => KgStatus::Parse,
        "not-found" => KgStatus::NotFound,
        "tuning" => KgStatus::Tuning,
        "backend" => KgStatus::Backend,
        "io" => KgStatus::Io,
        _ => KgStatus::Internal,
    }
}

struct Failure(KgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `body`, recording errors and containing panics.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            KgStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("panic inside kgadapt");
            KgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(KgStatus::NullPointer, format!("{what} is NULL"))
}

/// # Safety
/// `p` must be NULL or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(KgStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn feature_arg(p: *const c_char, what: &str) -> FfiResult<Feature> {
    Ok(str_arg(p, what)?.parse::<Feature>()?)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("interior NULs removed")
        .into_raw()
}

fn box_pkg(pkg: Pkg) -> *mut KgPkg {
    Box::into_raw(Box::new(KgPkg { pkg }))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn kg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn kg_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version contains NUL"),
        };
    VERSION.as_ptr()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn kg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a PKG file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_pkg_load(path: *const c_char, out: *mut *mut KgPkg) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pkg = store::read_pkg(Path::new(str_arg(path, "path")?))?;
        *out = box_pkg(pkg);
        Ok(())
    })
}

/// Parses a PKG from the text of a PKG file.
///
/// # Safety
/// `text` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_pkg_parse(text: *const c_char, out: *mut *mut KgPkg) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pkg = store::pkg_from_str(str_arg(text, "text")?, "<string>")?;
        *out = box_pkg(pkg);
        Ok(())
    })
}

/// Releases a PKG handle. NULL is ignored.
///
/// # Safety
/// `pkg` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn kg_pkg_free(pkg: *mut KgPkg) {
    if !pkg.is_null() {
        drop(Box::from_raw(pkg));
    }
}

/// Number of rated items; 0 for NULL.
///
/// # Safety
/// `pkg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kg_pkg_len(pkg: *const KgPkg) -> usize {
    pkg.as_ref().map_or(0, |p| p.pkg.len())
}

/// Renders a PKG in the PKG file format.
///
/// # Safety
/// `pkg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_pkg_to_string(pkg: *const KgPkg, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = c_string(store::pkg_to_string(&ref_arg(pkg, "pkg")?.pkg));
        Ok(())
    })
}

/// Bias score of the ordered pair (`given`, `bias`).
///
/// # Safety
/// Pointers must be valid; `out_q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_bias_score(
    pkg: *const KgPkg,
    given: *const c_char,
    bias: *const c_char,
    out_q: *mut f64,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out_q, "out_q")?;
        let pkg = &ref_arg(pkg, "pkg")?.pkg;
        let pie = bias_score(
            pkg,
            &feature_arg(given, "given")?,
            &feature_arg(bias, "bias")?,
        )?;
        *out = pie.q_bias;
        Ok(())
    })
}

/// Detected PIEs as text, one `given<TAB>bias<TAB>q<TAB>support` line each,
/// strongest first. `inclusive` non-zero keeps pairs with `|q| == threshold`.
///
/// # Safety
/// `pkg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_detect(
    pkg: *const KgPkg,
    threshold: f64,
    min_support: usize,
    inclusive: i32,
    out: *mut *mut c_char,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pkg = &ref_arg(pkg, "pkg")?.pkg;
        let cfg = DetectConfig {
            threshold,
            min_support,
            inclusive: inclusive != 0,
        };
        let text: String = detect_pies(pkg, &cfg)
            .iter()
            .map(|p| format!("{}\t{}\t{}\t{}\n", p.f_given, p.f_bias, p.q_bias, p.support))
            .collect();
        *out = c_string(text);
        Ok(())
    })
}

/// Adapts `pkg` for the PIE (`given`, `bias`) and returns a new handle; the
/// input is not modified. `strategy` is one of soft, hard, removal,
/// prompt-only, none.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_adapt(
    pkg: *const KgPkg,
    given: *const c_char,
    bias: *const c_char,
    strategy: *const c_char,
    proportion: f64,
    out: *mut *mut KgPkg,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pkg = &ref_arg(pkg, "pkg")?.pkg;
        let pie = bias_score(
            pkg,
            &feature_arg(given, "given")?,
            &feature_arg(bias, "bias")?,
        )?;
        let strategy: Strategy = str_arg(strategy, "strategy")?.parse()?;
        let policy = AdaptationPolicy::new(strategy, proportion)?;
        *out = box_pkg(apply_adaptation(pkg, &pie, &policy)?);
        Ok(())
    })
}

/// System and user messages for a query. `avoid` may be NULL; when set, the
/// avoidance sentence for that feature is appended to the user message.
///
/// # Safety
/// Pointers must be valid (`avoid` may be NULL); outs must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_build_prompt(
    pkg: *const KgPkg,
    query: *const c_char,
    avoid: *const c_char,
    out_system: *mut *mut c_char,
    out_user: *mut *mut c_char,
) -> KgStatus {
    guard(|| {
        let out_system = out_arg(out_system, "out_system")?;
        let out_user = out_arg(out_user, "out_user")?;
        *out_system = ptr::null_mut();
        *out_user = ptr::null_mut();
        let pkg = &ref_arg(pkg, "pkg")?.pkg;
        let query = feature_arg(query, "query")?;
        let avoid = if avoid.is_null() {
            None
        } else {
            Some(feature_arg(avoid, "avoid")?)
        };
        let pair = build_prompt(pkg, &query, avoid.as_ref(), &PromptConfig::default());
        *out_system = c_string(pair.system_message);
        *out_user = c_string(pair.user_message);
        Ok(())
    })
}

/// Reads a catalog in JSON-lines form.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_catalog_load(
    path: *const c_char,
    out: *mut *mut KgCatalog,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let catalog = store::read_catalog(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(KgCatalog {
            catalog: Arc::new(catalog),
            oracle: OnceLock::new(),
        }));
        Ok(())
    })
}

/// Releases a catalog handle. NULL is ignored.
///
/// # Safety
/// `catalog` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn kg_catalog_free(catalog: *mut KgCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Number of catalog entries; 0 for NULL.
///
/// # Safety
/// `catalog` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kg_catalog_len(catalog: *const KgCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.catalog.len())
}

/// Resolves free text to a catalog item id. `KG_STATUS_NOT_FOUND` when no
/// catalog name occurs in the text.
///
/// # Safety
/// Pointers must be valid; `out_id` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_extract_item(
    catalog: *const KgCatalog,
    text: *const c_char,
    out_id: *mut *mut c_char,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out_id, "out_id")?;
        *out = ptr::null_mut();
        let catalog = &ref_arg(catalog, "catalog")?.catalog;
        let id = extract_item(str_arg(text, "text")?, catalog)
            .ok_or_else(|| Failure(KgStatus::NotFound, "no catalog item named in text".into()))?;
        *out = c_string(id.0);
        Ok(())
    })
}

/// Classifies a recommendation text against the PIE (`given`, `bias`) of
/// the user's base PKG. Items the user already rated count as Invalid.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_classify(
    catalog: *const KgCatalog,
    base: *const KgPkg,
    text: *const c_char,
    given: *const c_char,
    bias: *const c_char,
    out: *mut KgCategory,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let catalog = &ref_arg(catalog, "catalog")?.catalog;
        let pkg = &ref_arg(base, "base")?.pkg;
        let pie = bias_score(
            pkg,
            &feature_arg(given, "given")?,
            &feature_arg(bias, "bias")?,
        )?;
        let item = extract_item(str_arg(text, "text")?, catalog);
        let category = classify(
            item.as_ref(),
            &pie,
            catalog,
            pkg,
            &ClassifyOptions::default(),
        )?;
        *out = category.into();
        Ok(())
    })
}

/// Deterministic oracle recommendation for `query` given `pkg`; returns the
/// recommended item's name.
///
/// # Safety
/// Pointers must be valid; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_oracle_recommend(
    catalog: *const KgCatalog,
    pkg: *const KgPkg,
    query: *const c_char,
    out_text: *mut *mut c_char,
) -> KgStatus {
    guard(|| {
        let out = out_arg(out_text, "out_text")?;
        *out = ptr::null_mut();
        let handle = ref_arg(catalog, "catalog")?;
        let pkg = &ref_arg(pkg, "pkg")?.pkg;
        let query = feature_arg(query, "query")?;
        let oracle = handle
            .oracle
            .get_or_init(|| OracleBackend::new(handle.catalog.clone(), OracleWeights::default()));
        let raw = oracle
            .recommend(&RecommendationRequest {
                pkg,
                query: &query,
                baseline_bias: None,
            })
            .map_err(Error::from)?;
        *out = c_string(raw.text);
        Ok(())
    })
}

/// One tuner update: `+lr` on In-PIE, `-lr` on Invalid, unchanged on
/// Out-PIE, clamped to [0, 1].
#[no_mangle]
pub extern "C" fn kg_tune_update(p: f64, category: KgCategory, learning_rate: f64) -> f64 {
    tune::update(p, category.into(), learning_rate)
}
