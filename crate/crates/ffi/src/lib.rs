//! C ABI over the bandformer library.
//!
//! Every function returns a [`BfStatus`]; on failure a message is stored
//! per thread and read with [`bf_last_error_message`]. Models are opaque
//! handles. Buffers handed out by the library are released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bandformer::attention::{sliding_window_attention, AttentionConfig};
use bandformer::generation::{sample, GenerationError, SamplerConfig, Strategy};
use bandformer::midi::{decode_events, encode_events, parse_midi, write_midi, EventVocab, MidiError};
use bandformer::model::{Model, ModelError};
use bandformer::tensor::Tensor;
use bandformer::training::{decode_checkpoint, load_checkpoint, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Capacity = 5,
    Vocabulary = 6,
    Panic = 7,
}

/// Opaque model handle.
pub struct BfModel {
    model: Model<f32>,
}

/// Token ids owned by the library; free with [`bf_tokens_free`].
#[repr(C)]
pub struct BfTokenBuffer {
    pub data: *mut u32,
    pub len: usize,
}

/// Bytes owned by the library; free with [`bf_bytes_free`].
#[repr(C)]
pub struct BfByteBuffer {
    pub data: *mut u8,
    pub len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(BfStatus, String);

impl From<MidiError> for Failure {
    fn from(e: MidiError) -> Self {
        let status = match e {
            MidiError::Vocabulary { .. } => BfStatus::Vocabulary,
            MidiError::Validation(_) => BfStatus::InvalidArgument,
            _ => BfStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::Vocabulary { .. } => BfStatus::Vocabulary,
            ModelError::Capacity { .. } => BfStatus::Capacity,
            _ => BfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let status = match e {
            TrainError::Io(_) => BfStatus::Io,
            _ => BfStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<GenerationError> for Failure {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Model(m) => m.into(),
            GenerationError::Capacity { .. } => Failure(BfStatus::Capacity, e.to_string()),
            GenerationError::Config(_) => Failure(BfStatus::InvalidArgument, e.to_string()),
        }
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(BfStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `data` must be valid for `len` reads, or may be null when `len == 0`.
unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn to_usize(tokens: &[u32]) -> Vec<usize> {
    tokens.iter().map(|&t| t as usize).collect()
}

fn token_buffer(tokens: &[usize]) -> BfTokenBuffer {
    let boxed: Box<[u32]> = tokens.iter().map(|&t| t as u32).collect();
    let len = boxed.len();
    BfTokenBuffer {
        data: Box::into_raw(boxed).cast(),
        len,
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn bf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_model_load(path: *const c_char, out: *mut *mut BfModel) -> BfStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(BfStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let (model, _) = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(BfModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `bytes` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut BfModel) -> BfStatus {
    guard(|| {
        let bytes = slice(bytes, len, "bytes")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (model, _) = decode_checkpoint(bytes)?;
        *out = Box::into_raw(Box::new(BfModel { model }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_model_free(model: *mut BfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_model_vocab_size(model: *const BfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.vocab_size())
}

/// Longest accepted sequence, or 0 when unbounded (recurrent models).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_model_max_len(model: *const BfModel) -> usize {
    model.as_ref().and_then(|m| m.model.spec().max_len()).unwrap_or(0)
}

/// Writes next-token logits for every position, `n * vocab_size` floats,
/// row-major.
///
/// # Safety
/// `tokens` must be valid for `n` reads and `logits` for `logits_len` writes.
#[no_mangle]
pub unsafe extern "C" fn bf_model_forward(
    model: *const BfModel,
    tokens: *const u32,
    n: usize,
    logits: *mut f32,
    logits_len: usize,
) -> BfStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let tokens = slice(tokens, n, "tokens")?;
        let needed = n * model.model.vocab_size();
        if logits_len != needed {
            return Err(Failure(
                BfStatus::InvalidArgument,
                format!("logits buffer holds {logits_len} floats, need {needed}"),
            ));
        }
        if logits.is_null() {
            return Err(null("logits"));
        }
        let out = model.model.forward(&to_usize(tokens), None)?;
        std::slice::from_raw_parts_mut(logits, needed).copy_from_slice(out.data());
        Ok(())
    })
}

/// Samples until `target_length` tokens. An empty primer starts from BOS.
/// `greedy != 0` takes the argmax and ignores `temperature` and `seed`.
///
/// # Safety
/// `primer` must be valid for `primer_len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_generate(
    model: *const BfModel,
    primer: *const u32,
    primer_len: usize,
    target_length: usize,
    temperature: f64,
    seed: u64,
    greedy: c_int,
    out: *mut BfTokenBuffer,
) -> BfStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let primer = slice(primer, primer_len, "primer")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SamplerConfig {
            temperature,
            primer: to_usize(primer),
            target_length,
            seed,
            strategy: if greedy != 0 { Strategy::Greedy } else { Strategy::Categorical },
        };
        let tokens = sample(&model.model, &cfg)?;
        *out = token_buffer(&tokens);
        Ok(())
    })
}

/// Parses a Standard MIDI File and encodes it as event tokens (BOS first).
///
/// # Safety
/// `midi` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_midi_to_tokens(midi: *const u8, len: usize, out: *mut BfTokenBuffer) -> BfStatus {
    guard(|| {
        let bytes = slice(midi, len, "midi")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tokens = encode_events(&parse_midi(bytes)?, &EventVocab)?;
        *out = token_buffer(&tokens);
        Ok(())
    })
}

/// Decodes event tokens and writes them as a format-0 MIDI file.
///
/// # Safety
/// `tokens` must be valid for `n` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_tokens_to_midi(tokens: *const u32, n: usize, out: *mut BfByteBuffer) -> BfStatus {
    guard(|| {
        let tokens = slice(tokens, n, "tokens")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (notes, _) = decode_events(&to_usize(tokens), &EventVocab)?;
        let boxed = write_midi(&notes)?.into_boxed_slice();
        let len = boxed.len();
        *out = BfByteBuffer {
            data: Box::into_raw(boxed).cast(),
            len,
        };
        Ok(())
    })
}

/// # Safety
/// `buffer` must come from this library and be freed once.
#[no_mangle]
pub unsafe extern "C" fn bf_tokens_free(buffer: BfTokenBuffer) {
    if !buffer.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buffer.data, buffer.len)));
    }
}

/// # Safety
/// `buffer` must come from this library and be freed once.
#[no_mangle]
pub unsafe extern "C" fn bf_bytes_free(buffer: BfByteBuffer) {
    if !buffer.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buffer.data, buffer.len)));
    }
}

/// Sliding-window attention over `[heads, n, head_dim]` inputs. `window`
/// is the full window (each position sees `window / 2` per side).
///
/// # Safety
/// `q`, `k`, `v` must be valid for `heads * n * head_dim` reads and `out`
/// for as many writes.
#[no_mangle]
pub unsafe extern "C" fn bf_sliding_window_attention(
    q: *const f32,
    k: *const f32,
    v: *const f32,
    heads: usize,
    n: usize,
    head_dim: usize,
    window: usize,
    dilation: usize,
    causal: c_int,
    out: *mut f32,
) -> BfStatus {
    guard(|| {
        let len = heads * n * head_dim;
        if len == 0 {
            return Err(Failure(BfStatus::InvalidArgument, "empty input".into()));
        }
        let shape = [heads, n, head_dim];
        let tensor = |p: *const f32, what: &str| -> Result<Tensor<f32>, Failure> {
            Tensor::from_vec(slice(p, len, what)?.to_vec(), &shape).map_err(|e| Failure(BfStatus::InvalidArgument, e.to_string()))
        };
        let (q, k, v) = (tensor(q, "q")?, tensor(k, "k")?, tensor(v, "v")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = AttentionConfig::sliding(heads, head_dim, window)
            .with_dilation(dilation)
            .with_causal(causal != 0);
        let result = sliding_window_attention(&q, &k, &v, &cfg, None)
            .map_err(|e| Failure(BfStatus::InvalidArgument, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(result.output.data());
        Ok(())
    })
}
