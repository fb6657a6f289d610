//! Master/worker distribution: a line-oriented TCP protocol, redundant
//! work validation by digest quorum, and the master loop that feeds the
//! asynchronous search.

mod master;
mod protocol;
mod quorum;
mod server;
mod work;
mod worker;

pub use master::{
    MasterError, MasterOptions, MasterState, ValidationEvent, DEFAULT_CHECKPOINT_EVERY,
};
pub use protocol::{
    read_message, write_message, Message, ProtocolError, MAX_PAYLOAD, PROTOCOL_VERSION,
};
pub use quorum::{QuorumVerdict, UnitTracker};
pub use server::serve;
pub use work::{genome_digest, WorkError, WorkResult, WorkUnit};
pub use worker::{
    evaluate_work_unit, run_in_process, run_worker, WorkerCheckpointing, WorkerError,
    WorkerOptions, WorkerSummary, DEFAULT_CHECKPOINT_EPOCHS,
};
