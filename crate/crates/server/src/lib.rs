//! JSON-RPC 2.0 service, preview server and command line for the
//! website generation pipeline in `fediff-core`.

pub mod cli;
pub mod http;
pub mod rpc;

pub use http::router;
pub use rpc::RpcService;
