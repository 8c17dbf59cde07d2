//! Quantization of solution fields to three-digit codes and the
//! comma/semicolon token streams built from them.

mod quant;
mod stream;

pub use quant::{
    quantization_floor, quantize, quantize_with, reconstruct, temporal_differences, FloorStep, QuantRange,
    QuantizedField, TemporalDifferences, CODE_DEGENERATE, CODE_MAX, CODE_MIN, CODE_SPAN,
};
pub use stream::{
    context_prompt, parse, serialize, serialize_slice, token_count, Malformed, OodFlag, ParseReport, ParsedSlice,
    TokenStream,
};
