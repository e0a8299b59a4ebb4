//! Prompt rendering and a chat-completions client for translation and
//! profiling calls.
//!
//! The whole rendered prompt is sent as one user message. Transport errors
//! and 5xx responses are retried three times with 1s/2s/4s backoff.

mod client;
mod templates;

use thiserror::Error;

pub use client::{
    ApiMode, Completion, Gateway, GatewayConfig, HttpResponse, Transport, UreqTransport,
};
pub use templates::{render_prompt, PromptTemplate, PLACEHOLDER};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("lyrics are empty")]
    EmptyInput,
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, body: String, attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("gateway config: {0}")]
    Config(String),
}
