//! C ABI over the convevo library: deterministic RNG and float text codecs,
//! genome text round-trips, IDX dataset loading, and work-unit evaluation so
//! non-Rust volunteer hosts can train and verify units.
//!
//! Conventions: handles are opaque pointers created and destroyed by paired
//! `_new`/`_free` calls; strings cross the boundary as NUL-terminated UTF-8;
//! every `char*` the library returns (except `convevo_version` and
//! `convevo_last_error`) is owned by the caller and must be released with
//! `convevo_string_free`. Fallible calls return a `ConvevoStatus`, and on
//! failure `convevo_last_error` describes what went wrong until the next
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use convevo::data::Dataset;
use convevo::determinism::{
    hexfloat_decode, hexfloat_encode, portable_exp, portable_ln, PortableRng,
};
use convevo::distribution::{evaluate_work_unit, WorkUnit};
use convevo::genome::{deserialize_genome, genome_to_dot, serialize_genome, CnnGenome};

/// Outcome of a fallible call. Anything but `OK` leaves a message in
/// `convevo_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvevoStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Text input did not parse (genome, work unit, or hexfloat).
    ParseError = 3,
    /// The value has no finite text form (NaN or infinity).
    NonFinite = 4,
    /// The RNG state was outside the valid range.
    BadState = 5,
    /// The output buffer is too small for the encoded text.
    BufferTooSmall = 6,
    /// The genome has not been trained, so it has no fitness yet.
    Unevaluated = 7,
    /// A file could not be read or had a malformed layout.
    IoError = 8,
    /// Training failed (checkpoint mismatch or an input/dataset conflict).
    TrainError = 9,
    /// Training panicked; the work unit result is undefined.
    Panic = 10,
}

/// Smallest buffer that fits every `convevo_hexfloat_encode` output,
/// terminator included.
pub const CONVEVO_HEXFLOAT_CAPACITY: usize = 32;

/// Deterministic linear congruential generator; same sequence on every host.
pub struct ConvevoRng {
    inner: PortableRng,
}

/// A CNN topology with optional trained weights.
pub struct ConvevoGenome {
    inner: CnnGenome,
}

/// Labeled images in the layout the trainer consumes.
pub struct ConvevoDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', "?");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("NULs were stripped"));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn fail(status: ConvevoStatus, message: impl Display) -> ConvevoStatus {
    set_error(&message.to_string());
    status
}

fn into_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', "?"))
        .expect("NULs were stripped")
        .into_raw()
}

/// Reads a required NUL-terminated UTF-8 argument.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, ConvevoStatus> {
    if ptr.is_null() {
        return Err(fail(ConvevoStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ConvevoStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn convevo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer is valid until the next convevo call on the same thread.
#[no_mangle]
pub extern "C" fn convevo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn convevo_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// Creates a generator. Any seed is accepted; degenerate seeds are remapped
/// to keep the sequence non-trivial.
#[no_mangle]
pub extern "C" fn convevo_rng_new(seed: u64) -> *mut ConvevoRng {
    clear_error();
    Box::into_raw(Box::new(ConvevoRng { inner: PortableRng::new(seed) }))
}

/// Resumes a generator from a previously observed state. Fails with
/// `BAD_STATE` when the state is outside the generator's cycle.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_from_state(
    state: u64,
    out: *mut *mut ConvevoRng,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    match PortableRng::from_state(state) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ConvevoRng { inner }));
            ConvevoStatus::Ok
        }
        Err(e) => fail(ConvevoStatus::BadState, e),
    }
}

/// Current state, suitable for `convevo_rng_from_state`. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_state(rng: *const ConvevoRng) -> u64 {
    clear_error();
    match rng.as_ref() {
        Some(r) => r.inner.state(),
        None => {
            set_error("rng is null");
            0
        }
    }
}

/// Next raw draw in [1, 2147483646]. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_next(rng: *mut ConvevoRng) -> u64 {
    clear_error();
    match rng.as_mut() {
        Some(r) => r.inner.next(),
        None => {
            set_error("rng is null");
            0
        }
    }
}

/// Uniform draw in [0, 1). Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_uniform(rng: *mut ConvevoRng) -> f64 {
    clear_error();
    match rng.as_mut() {
        Some(r) => r.inner.uniform_real(),
        None => {
            set_error("rng is null");
            0.0
        }
    }
}

/// Uniform integer in [0, n). Null rng or n == 0 yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_below(rng: *mut ConvevoRng, n: u64) -> u64 {
    clear_error();
    match rng.as_mut() {
        Some(r) if n > 0 => r.inner.below(n),
        Some(_) => {
            set_error("n is zero");
            0
        }
        None => {
            set_error("rng is null");
            0
        }
    }
}

/// Approximately standard normal draw. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_normal(rng: *mut ConvevoRng) -> f64 {
    clear_error();
    match rng.as_mut() {
        Some(r) => r.inner.normal(),
        None => {
            set_error("rng is null");
            0.0
        }
    }
}

/// Frees a generator. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn convevo_rng_free(rng: *mut ConvevoRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// e^x with the library's bit-reproducible evaluation.
#[no_mangle]
pub extern "C" fn convevo_exp(x: f64) -> f64 {
    portable_exp(x)
}

/// Natural log with the library's bit-reproducible evaluation.
#[no_mangle]
pub extern "C" fn convevo_ln(x: f64) -> f64 {
    portable_ln(x)
}

/// Writes the lossless text form of a finite double into `buffer`,
/// NUL-terminated. `CONVEVO_HEXFLOAT_CAPACITY` bytes always suffice.
#[no_mangle]
pub unsafe extern "C" fn convevo_hexfloat_encode(
    value: f64,
    buffer: *mut c_char,
    capacity: usize,
) -> ConvevoStatus {
    clear_error();
    if buffer.is_null() {
        return fail(ConvevoStatus::NullArgument, "buffer is null");
    }
    let text = match hexfloat_encode(value) {
        Ok(t) => t,
        Err(e) => return fail(ConvevoStatus::NonFinite, e),
    };
    let bytes = text.as_bytes();
    if capacity < bytes.len() + 1 {
        return fail(
            ConvevoStatus::BufferTooSmall,
            format!("need {} bytes, have {capacity}", bytes.len() + 1),
        );
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buffer as *mut u8, bytes.len());
    *buffer.add(bytes.len()) = 0;
    ConvevoStatus::Ok
}

/// Parses a hexfloat produced by `convevo_hexfloat_encode` back into the
/// bit-identical double.
#[no_mangle]
pub unsafe extern "C" fn convevo_hexfloat_decode(
    text: *const c_char,
    out: *mut f64,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    let text = match utf8_arg(text, "text") {
        Ok(t) => t,
        Err(status) => return status,
    };
    match hexfloat_decode(text) {
        Ok(value) => {
            *out = value;
            ConvevoStatus::Ok
        }
        Err(e) => fail(ConvevoStatus::ParseError, e),
    }
}

/// Parses a genome from its canonical text form.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_parse(
    text: *const c_char,
    out: *mut *mut ConvevoGenome,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    let text = match utf8_arg(text, "text") {
        Ok(t) => t,
        Err(status) => return status,
    };
    match deserialize_genome(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ConvevoGenome { inner }));
            ConvevoStatus::Ok
        }
        Err(e) => fail(ConvevoStatus::ParseError, e),
    }
}

/// Canonical text form; the round-trip through `convevo_genome_parse` is
/// byte-identical. Null yields null.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_serialize(genome: *const ConvevoGenome) -> *mut c_char {
    clear_error();
    match genome.as_ref() {
        Some(g) => into_c_string(serialize_genome(&g.inner)),
        None => {
            set_error("genome is null");
            ptr::null_mut()
        }
    }
}

/// GraphViz rendering of the topology. Null yields null.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_dot(genome: *const ConvevoGenome) -> *mut c_char {
    clear_error();
    match genome.as_ref() {
        Some(g) => into_c_string(genome_to_dot(&g.inner)),
        None => {
            set_error("genome is null");
            ptr::null_mut()
        }
    }
}

/// Master-assigned genome id. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_id(genome: *const ConvevoGenome) -> u64 {
    clear_error();
    match genome.as_ref() {
        Some(g) => g.inner.genome_id(),
        None => {
            set_error("genome is null");
            0
        }
    }
}

/// Number of nodes, input and output included. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_node_count(genome: *const ConvevoGenome) -> u64 {
    clear_error();
    match genome.as_ref() {
        Some(g) => g.inner.nodes().len() as u64,
        None => {
            set_error("genome is null");
            0
        }
    }
}

/// Number of edges, disabled ones included. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_edge_count(genome: *const ConvevoGenome) -> u64 {
    clear_error();
    match genome.as_ref() {
        Some(g) => g.inner.edges().len() as u64,
        None => {
            set_error("genome is null");
            0
        }
    }
}

/// Training error sum of an evaluated genome. `UNEVALUATED` when the genome
/// has not been trained; `out` is untouched on failure.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_fitness(
    genome: *const ConvevoGenome,
    out: *mut f64,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    let genome = match genome.as_ref() {
        Some(g) => g,
        None => return fail(ConvevoStatus::NullArgument, "genome is null"),
    };
    match genome.inner.fitness().value() {
        Some(value) => {
            *out = value;
            ConvevoStatus::Ok
        }
        None => fail(ConvevoStatus::Unevaluated, "genome has not been trained"),
    }
}

/// Frees a genome. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn convevo_genome_free(genome: *mut ConvevoGenome) {
    if !genome.is_null() {
        drop(Box::from_raw(genome));
    }
}

/// Loads an IDX image file and its label file, padding each image border
/// with `pad` zero pixels.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_load(
    images_path: *const c_char,
    labels_path: *const c_char,
    pad: usize,
    out: *mut *mut ConvevoDataset,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    let images = match utf8_arg(images_path, "images_path") {
        Ok(t) => t,
        Err(status) => return status,
    };
    let labels = match utf8_arg(labels_path, "labels_path") {
        Ok(t) => t,
        Err(status) => return status,
    };
    match Dataset::load(Path::new(images), Path::new(labels), pad) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ConvevoDataset { inner }));
            ConvevoStatus::Ok
        }
        Err(e) => fail(ConvevoStatus::IoError, e),
    }
}

/// Deterministic sample of `count` items (clamped to the dataset size) into
/// a new dataset handle.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_subset(
    dataset: *const ConvevoDataset,
    count: u64,
    seed: u64,
    out: *mut *mut ConvevoDataset,
) -> ConvevoStatus {
    clear_error();
    if out.is_null() {
        return fail(ConvevoStatus::NullArgument, "out is null");
    }
    match dataset.as_ref() {
        Some(d) => {
            let inner = d.inner.subset(count as usize, seed);
            *out = Box::into_raw(Box::new(ConvevoDataset { inner }));
            ConvevoStatus::Ok
        }
        None => fail(ConvevoStatus::NullArgument, "dataset is null"),
    }
}

/// Number of images. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_len(dataset: *const ConvevoDataset) -> u64 {
    clear_error();
    match dataset.as_ref() {
        Some(d) => d.inner.len() as u64,
        None => {
            set_error("dataset is null");
            0
        }
    }
}

/// Padded image width. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_width(dataset: *const ConvevoDataset) -> u64 {
    clear_error();
    match dataset.as_ref() {
        Some(d) => d.inner.width() as u64,
        None => {
            set_error("dataset is null");
            0
        }
    }
}

/// Padded image height. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_height(dataset: *const ConvevoDataset) -> u64 {
    clear_error();
    match dataset.as_ref() {
        Some(d) => d.inner.height() as u64,
        None => {
            set_error("dataset is null");
            0
        }
    }
}

/// Number of label classes. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_classes(dataset: *const ConvevoDataset) -> u64 {
    clear_error();
    match dataset.as_ref() {
        Some(d) => d.inner.classes() as u64,
        None => {
            set_error("dataset is null");
            0
        }
    }
}

/// Frees a dataset. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn convevo_dataset_free(dataset: *mut ConvevoDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains one work unit (text form) against a dataset and returns the result
/// text whose digest the master verifies. Identical inputs produce identical
/// bytes on every host.
#[no_mangle]
pub unsafe extern "C" fn convevo_evaluate_work_unit(
    unit_text: *const c_char,
    dataset: *const ConvevoDataset,
    out_result: *mut *mut c_char,
) -> ConvevoStatus {
    clear_error();
    if out_result.is_null() {
        return fail(ConvevoStatus::NullArgument, "out_result is null");
    }
    let text = match utf8_arg(unit_text, "unit_text") {
        Ok(t) => t,
        Err(status) => return status,
    };
    let data = match dataset.as_ref() {
        Some(d) => &d.inner,
        None => return fail(ConvevoStatus::NullArgument, "dataset is null"),
    };
    let unit = match WorkUnit::from_text(text) {
        Ok(u) => u,
        Err(e) => return fail(ConvevoStatus::ParseError, e),
    };
    let input = unit.genome.input_node();
    if (input.size_x as usize, input.size_y as usize) != (data.width(), data.height()) {
        return fail(
            ConvevoStatus::TrainError,
            format!(
                "unit expects {}x{} input, dataset is {}x{}",
                input.size_x,
                input.size_y,
                data.width(),
                data.height()
            ),
        );
    }
    match catch_unwind(AssertUnwindSafe(|| evaluate_work_unit(&unit, data, None))) {
        Ok(Ok(result)) => {
            *out_result = into_c_string(result.to_text());
            ConvevoStatus::Ok
        }
        Ok(Err(e)) => fail(ConvevoStatus::TrainError, e),
        Err(_) => fail(ConvevoStatus::Panic, "training panicked"),
    }
}
