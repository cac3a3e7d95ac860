//! C interface to iegraph.
//!
//! Corpora and models are opaque handles created by `ieg_*_load` functions
//! and released with the matching `ieg_*_free`. Every fallible call returns
//! an [`IegStatus`]; on failure `ieg_last_error()` describes the problem.
//! Strings returned through `char **` out-parameters are owned by the caller
//! and must be released with `ieg_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use iegraph::checkpoint;
use iegraph::corpus::{corpus_stats, parse_corpus, to_json_string, Corpus, SCHEMA_VERSION};
use iegraph::embed::{provider_from_provenance, EmbeddingProvider};
use iegraph::graph::corpus_to_graphs;
use iegraph::nesting::count_nesting;
use iegraph::parser::Model;
use iegraph::score::score;
use iegraph::train::predict_corpus;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    Model = 5,
    Panic = 6,
}

/// A loaded, validated corpus.
pub struct IegCorpus {
    corpus: Corpus,
}

/// A trained model with the embedding provider it was trained with.
pub struct IegModel {
    model: Model,
    provider: Box<dyn EmbeddingProvider>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(IegStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IegStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IegStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(IegStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(IegStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(IegStatus::NullPointer, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure(IegStatus::NullPointer, format!("{name} is null")));
    }
    Ok(())
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(IegStatus::InvalidInput, e.to_string())
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let s = CString::new(text).map_err(invalid)?;
    *out = s.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ieg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ieg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ieg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a corpus JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_from_json(json: *const c_char, out: *mut *mut IegCorpus) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let corpus = parse_corpus(text, SCHEMA_VERSION).map_err(invalid)?;
        *out = Box::into_raw(Box::new(IegCorpus { corpus }));
        Ok(())
    })
}

/// Reads a corpus file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_load(path: *const c_char, out: *mut *mut IegCorpus) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Failure(IegStatus::Io, format!("{path}: {e}")))?;
        let corpus = parse_corpus(&text, SCHEMA_VERSION).map_err(|e| invalid(format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(IegCorpus { corpus }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_free(corpus: *mut IegCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of sentences.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_len(corpus: *const IegCorpus, out: *mut usize) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(corpus, "corpus")?.corpus.len();
        Ok(())
    })
}

/// Canonical corpus JSON.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_to_json(corpus: *const IegCorpus, out: *mut *mut c_char) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        write_string(out, to_json_string(&ref_arg(corpus, "corpus")?.corpus))
    })
}

/// The corpus as a graph document (JSON).
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_graphs_json(corpus: *const IegCorpus, out: *mut *mut c_char) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let doc = corpus_to_graphs(&ref_arg(corpus, "corpus")?.corpus).map_err(invalid)?;
        write_string(out, serde_json::to_string(&doc).map_err(invalid)?)
    })
}

/// Corpus statistics (JSON object).
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_stats_json(corpus: *const IegCorpus, out: *mut *mut c_char) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let stats = corpus_stats(&ref_arg(corpus, "corpus")?.corpus);
        write_string(out, serde_json::to_string(&stats).map_err(invalid)?)
    })
}

/// Nesting counts (JSON object).
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_corpus_nesting_json(corpus: *const IegCorpus, out: *mut *mut c_char) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let report = count_nesting(&ref_arg(corpus, "corpus")?.corpus);
        write_string(out, serde_json::to_string(&report).map_err(invalid)?)
    })
}

/// Scores `pred` against `gold` (JSON report).
///
/// # Safety
/// Both corpora must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_score_json(pred: *const IegCorpus, gold: *const IegCorpus, out: *mut *mut c_char) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let report = score(&ref_arg(pred, "pred")?.corpus, &ref_arg(gold, "gold")?.corpus).map_err(invalid)?;
        write_string(out, serde_json::to_string(&report).map_err(invalid)?)
    })
}

/// Loads a checkpoint directory together with its embedding provider.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_model_load(dir: *const c_char, out: *mut *mut IegModel) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let (model, meta) = checkpoint::load(Path::new(dir)).map_err(|e| Failure(IegStatus::Model, e.to_string()))?;
        let provider = provider_from_provenance(&meta.embedding_provider).map_err(|e| Failure(IegStatus::Model, e.to_string()))?;
        *out = Box::into_raw(Box::new(IegModel { model, provider }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ieg_model_free(model: *mut IegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses every sentence of `corpus` into a new corpus handle.
///
/// # Safety
/// `model` and `corpus` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ieg_model_predict(model: *const IegModel, corpus: *const IegCorpus, out: *mut *mut IegCorpus) -> IegStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let c = &ref_arg(corpus, "corpus")?.corpus;
        let pred = predict_corpus(&m.model, c, m.provider.as_ref()).map_err(|e| Failure(IegStatus::Model, e.to_string()))?;
        *out = Box::into_raw(Box::new(IegCorpus { corpus: pred }));
        Ok(())
    })
}
