//! Client side of the toolkit: sampling and second-turn queries against an
//! OpenAI-compatible chat endpoint, elicitation prompts, reply parsers and a
//! cached remote judge.

pub mod client;
pub mod config;
pub mod judge;
pub mod parse;
pub mod prompts;
pub mod sampling;

pub use client::{ChatRequest, Choice, Client, HttpReply, HttpTransport, LlmError, Transport};
pub use config::{EndpointConfig, RetryPolicy, API_KEY_ENV};
pub use judge::RemoteJudge;
pub use parse::{parse_topk, parse_verbalized, parse_verdict, ParseFailure, TopkParse};
pub use prompts::{build_prompt, PromptContext, PromptError, PromptKind};
pub use sampling::{
    attach_topk, choice_to_sample, collect_probes, sample_answers, sample_many, ProbeRequest,
};
