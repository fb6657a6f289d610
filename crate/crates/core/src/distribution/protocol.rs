//! Wire framing for the master/worker conversation: one header line
//! `convevo/1 <KIND> <len>\n` followed by `len` bytes of UTF-8 payload.
//! Payloads reuse the checkpoint text formats, so every byte on the wire
//! is inspectable with a pager.

use std::io::{self, Read, Write};
use thiserror::Error;

pub const PROTOCOL_VERSION: &str = "convevo/1";

/// Longest accepted payload. Genomes grow, but not to gigabytes; anything
/// larger is a corrupt or hostile peer.
pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;

const MAX_HEADER: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Worker asks for an assignment.
    RequestWork,
    /// Master answers with a work unit (payload: unit text).
    WorkUnit(String),
    /// Worker reports a trained result (payload: result text).
    ReportResult(String),
    /// Master confirms a result was absorbed.
    Ack,
    /// Master tells the worker to exit; also closes the conversation.
    Shutdown,
}

impl Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::RequestWork => "REQUEST_WORK",
            Message::WorkUnit(_) => "WORK_UNIT",
            Message::ReportResult(_) => "REPORT_RESULT",
            Message::Ack => "ACK",
            Message::Shutdown => "SHUTDOWN",
        }
    }

    fn payload(&self) -> &str {
        match self {
            Message::WorkUnit(text) | Message::ReportResult(text) => text,
            _ => "",
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

fn malformed(message: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(message.into())
}

pub fn write_message(stream: &mut impl Write, message: &Message) -> Result<(), ProtocolError> {
    let payload = message.payload();
    let header = format!("{PROTOCOL_VERSION} {} {}\n", message.kind(), payload.len());
    stream.write_all(header.as_bytes())?;
    stream.write_all(payload.as_bytes())?;
    stream.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` means the peer closed the stream cleanly
/// between frames.
pub fn read_message(stream: &mut impl Read) -> Result<Option<Message>, ProtocolError> {
    let mut header = Vec::with_capacity(MAX_HEADER);
    let mut byte = [0u8; 1];
    loop {
        match stream.read(&mut byte) {
            Ok(0) => {
                if header.is_empty() {
                    return Ok(None);
                }
                return Err(malformed("stream ended inside a header"));
            }
            Ok(_) => {
                if byte[0] == b'\n' {
                    break;
                }
                header.push(byte[0]);
                if header.len() > MAX_HEADER {
                    return Err(malformed("header too long"));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let header = std::str::from_utf8(&header).map_err(|_| malformed("header is not UTF-8"))?;
    let mut fields = header.split(' ');
    let version = fields.next().unwrap_or_default();
    if version != PROTOCOL_VERSION {
        return Err(malformed(format!("unknown protocol `{version}`")));
    }
    let kind = fields.next().ok_or_else(|| malformed("missing kind"))?;
    let len: usize = fields
        .next()
        .ok_or_else(|| malformed("missing length"))?
        .parse()
        .map_err(|_| malformed("bad length"))?;
    if fields.next().is_some() {
        return Err(malformed("trailing header fields"));
    }
    if len > MAX_PAYLOAD {
        return Err(malformed(format!("payload of {len} bytes refused")));
    }
    let mut payload = vec![0u8; len];
    stream.read_exact(&mut payload)?;
    let payload = String::from_utf8(payload).map_err(|_| malformed("payload is not UTF-8"))?;
    let message = match (kind, payload) {
        ("REQUEST_WORK", p) if p.is_empty() => Message::RequestWork,
        ("ACK", p) if p.is_empty() => Message::Ack,
        ("SHUTDOWN", p) if p.is_empty() => Message::Shutdown,
        ("WORK_UNIT", p) => Message::WorkUnit(p),
        ("REPORT_RESULT", p) => Message::ReportResult(p),
        ("REQUEST_WORK" | "ACK" | "SHUTDOWN", _) => {
            return Err(malformed(format!("`{kind}` takes no payload")))
        }
        (other, _) => return Err(malformed(format!("unknown kind `{other}`"))),
    };
    Ok(Some(message))
}
