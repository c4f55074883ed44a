//! TCP front end: one reader thread per connection, plus one forwarder
//! thread per telemetry subscription on that connection.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use crate::codec::{read_frame, write_json};
use crate::error::ApiError;
use crate::host::{respond, Host, Subscriber};

pub struct Server {
    listener: TcpListener,
    host: Arc<Host>,
}

type Writer = Arc<Mutex<BufWriter<TcpStream>>>;

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, host: Arc<Host>) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, host })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn host(&self) -> &Arc<Host> {
        &self.host
    }

    /// Accepts connections until the listener fails.
    pub fn serve(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let host = self.host.clone();
            std::thread::Builder::new().name("connection".into()).spawn(move || {
                let _ = connection(stream, host);
            })?;
        }
        Ok(())
    }

    /// Runs [`Server::serve`] on a background thread.
    pub fn spawn(self) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
        let addr = self.local_addr()?;
        let handle = std::thread::Builder::new().name("accept".into()).spawn(move || self.serve())?;
        Ok((addr, handle))
    }
}

fn send(writer: &Writer, v: &Value) -> io::Result<()> {
    let mut w = writer.lock().map_err(|_| io::Error::other("writer poisoned"))?;
    write_json(&mut *w, v)
}

fn connection(stream: TcpStream, host: Arc<Host>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let writer: Writer = Arc::new(Mutex::new(BufWriter::new(stream.try_clone()?)));
    let mut reader = BufReader::new(stream);
    let mut subs: Vec<Arc<Subscriber>> = Vec::new();
    let result = loop {
        let bytes = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        };
        let response = match serde_json::from_slice::<Value>(&bytes) {
            Err(e) => respond(Value::Null, Err(ApiError::bad_request(format!("malformed JSON: {e}")))),
            Ok(req) if req.get("method").and_then(Value::as_str) == Some("subscribe") => {
                let id = req.get("id").cloned().unwrap_or(Value::Null);
                let params = req.get("params").cloned().unwrap_or_else(|| json!({}));
                match host.subscribe(&params) {
                    Ok((sub, v)) => {
                        // Respond before the forwarder can emit telemetry.
                        if let Err(e) = send(&writer, &respond(id, Ok(v))) {
                            sub.close();
                            break Err(e);
                        }
                        let w = writer.clone();
                        let s = sub.clone();
                        std::thread::Builder::new().name("telemetry".into()).spawn(move || forward(s, w))?;
                        subs.push(sub);
                        continue;
                    }
                    Err(e) => respond(id, Err(e)),
                }
            }
            Ok(req) => host.handle(&req),
        };
        if let Err(e) = send(&writer, &response) {
            break Err(e);
        }
    };
    for s in subs {
        s.close();
    }
    result
}

fn forward(sub: Arc<Subscriber>, writer: Writer) {
    loop {
        match sub.pop(Duration::from_millis(200)) {
            Some(msg) => {
                if send(&writer, &msg).is_err() {
                    sub.close();
                    return;
                }
            }
            None if sub.is_closed() => return,
            None => {}
        }
    }
}
