//! Building blocks for synthetic speech corpora in low-resource languages:
//! text generation through chat endpoints, deduplication, human-rating
//! statistics, TTS hallucination filtering, noise augmentation, corpus
//! splitting and mixing, and WER/CER evaluation with bootstrap intervals.

pub mod asr_eval;
pub mod audio;
pub mod augment;
pub mod clients;
pub mod corpus;
pub mod dedup;
pub mod ratings;
pub mod seed;
pub mod stats;
pub mod text;
pub mod textgen;
pub mod tts_qc;
