//! Blocking client for the socket protocol.

use std::collections::VecDeque;
use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde_json::{json, Value};

use crate::codec::{read_json, write_json};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
    /// Telemetry and event messages received while waiting for responses.
    pub pending: VecDeque<Value>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            next_id: 1,
            pending: VecDeque::new(),
        })
    }

    /// Sends a raw message and returns the next response, buffering any
    /// streamed messages that arrive first.
    pub fn request(&mut self, msg: &Value) -> io::Result<Value> {
        write_json(&mut self.writer, msg)?;
        loop {
            let v = read_json(&mut self.reader)?
                .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"))?;
            if v.get("type").and_then(Value::as_str) == Some("response") {
                return Ok(v);
            }
            self.pending.push_back(v);
        }
    }

    /// Calls `method` and returns the whole response envelope.
    pub fn call(&mut self, method: &str, params: Value) -> io::Result<Value> {
        let id = self.next_id;
        self.next_id += 1;
        self.request(&json!({ "id": id, "method": method, "params": params }))
    }

    /// Next streamed message, waiting up to `timeout`.
    pub fn next_message(&mut self, timeout: Duration) -> io::Result<Option<Value>> {
        if let Some(v) = self.pending.pop_front() {
            return Ok(Some(v));
        }
        self.reader.get_ref().set_read_timeout(Some(timeout))?;
        let r = read_json(&mut self.reader);
        self.reader.get_ref().set_read_timeout(None)?;
        match r {
            Ok(v) => Ok(v),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
