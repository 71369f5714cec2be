//! TCP transport for a [`Session`]: one event loop owns the session,
//! reader threads forward client lines to it, and messages fan out to
//! every connected client.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::{BridgeError, Command, ErrorCode, Message, RunMode, Session};
use crate::episode::Outcome;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    /// Delay between steps while running.
    pub step_interval: Duration,
    /// Start free-running instead of paused.
    pub autorun: bool,
    /// Return once the episode has ended.
    pub exit_on_end: bool,
    /// Dataset file rewritten after every recorded human choice.
    pub record: Option<PathBuf>,
    /// Stop after this long without any activity.
    pub idle_timeout: Option<Duration>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            step_interval: Duration::from_millis(100),
            autorun: false,
            exit_on_end: false,
            record: None,
            idle_timeout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServeSummary {
    pub outcome: Option<Outcome>,
    pub revision: u64,
    pub records: usize,
    pub checksum: String,
}

enum Event {
    Connect(u64, TcpStream),
    Line(u64, String),
    Disconnect(u64),
}

pub fn bind(addr: &str) -> Result<TcpListener, BridgeError> {
    TcpListener::bind(addr).map_err(|e| BridgeError::PortUnavailable(format!("{addr}: {e}")))
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>) {
    for (id, stream) in listener.incoming().enumerate() {
        let Ok(stream) = stream else { continue };
        let Ok(reader) = stream.try_clone() else { continue };
        let id = id as u64;
        if tx.send(Event::Connect(id, stream)).is_err() {
            return;
        }
        let tx = tx.clone();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(Event::Line(id, l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Event::Disconnect(id));
        });
    }
}

struct Clients(Vec<(u64, TcpStream)>);

impl Clients {
    fn send_to(&mut self, id: u64, msgs: &[Message]) {
        let mut dead = false;
        if let Some((_, s)) = self.0.iter_mut().find(|(c, _)| *c == id) {
            dead = write_all(s, msgs).is_err();
        }
        if dead {
            self.0.retain(|(c, _)| *c != id);
        }
    }

    fn broadcast(&mut self, msgs: &[Message]) {
        if msgs.is_empty() {
            return;
        }
        self.0.retain_mut(|(_, s)| write_all(s, msgs).is_ok());
    }
}

fn write_all(s: &mut TcpStream, msgs: &[Message]) -> std::io::Result<()> {
    let text: String = msgs.iter().map(Message::to_line).collect();
    s.write_all(text.as_bytes())?;
    s.flush()
}

/// Runs the session event loop on `listener`. Replies (`ack`, `error`) go
/// to the issuing client; everything else is broadcast.
pub fn serve(mut session: Session, listener: TcpListener, config: ServeConfig) -> Result<ServeSummary, BridgeError> {
    let (tx, rx): (Sender<Event>, Receiver<Event>) = mpsc::channel();
    thread::spawn(move || accept_loop(listener, tx));
    if config.autorun {
        session.set_run_mode(RunMode::FreeRunning);
    }
    let mut clients = Clients(Vec::new());
    let mut recorded = 0;
    let mut last_activity = Instant::now();
    loop {
        let wait = if session.is_running() {
            config.step_interval
        } else {
            Duration::from_millis(50)
        };
        let mut deadline = Instant::now() + wait;
        loop {
            let now = Instant::now();
            let ev = match rx.recv_timeout(deadline.saturating_duration_since(now)) {
                Ok(ev) => ev,
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::PortUnavailable("listener closed".into())),
            };
            last_activity = Instant::now();
            match ev {
                Event::Connect(id, mut stream) => {
                    if write_all(&mut stream, &[session.snapshot()]).is_ok() {
                        clients.0.push((id, stream));
                    }
                }
                Event::Disconnect(id) => clients.0.retain(|(c, _)| *c != id),
                Event::Line(id, line) => {
                    let msgs = match serde_json::from_str::<Command>(&line) {
                        Ok(cmd) => session.handle(cmd),
                        Err(e) => vec![Message::Error {
                            revision: session.revision(),
                            code: ErrorCode::BadMessage,
                            message: e.to_string(),
                        }],
                    };
                    let (reply, rest) = msgs.split_at(1);
                    clients.send_to(id, reply);
                    clients.broadcast(rest);
                    if session.is_running() {
                        deadline = Instant::now();
                    }
                }
            }
        }
        if session.is_running() {
            let msgs = session.tick().map_err(|e| BridgeError::ScenarioInvalid(e.to_string()))?;
            clients.broadcast(&msgs);
            last_activity = Instant::now();
        }
        let records = session.records().len();
        if records != recorded {
            recorded = records;
            if let Some(path) = &config.record {
                session
                    .dataset()
                    .save(path)
                    .map_err(|e| BridgeError::PortUnavailable(format!("record file: {e}")))?;
            }
        }
        let idle = config.idle_timeout.is_some_and(|t| last_activity.elapsed() > t);
        if (config.exit_on_end && session.is_ended()) || idle {
            return Ok(ServeSummary {
                outcome: session.episode().outcome(),
                revision: session.revision(),
                records: recorded,
                checksum: session.checksum(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Mirror, SessionConfig};
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorConfig};
    use std::sync::Arc;

    fn read_messages(reader: BufReader<TcpStream>, until_end: bool) -> Vec<Message> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let Ok(line) = line else { break };
            let m: Message = serde_json::from_str(&line).unwrap();
            let end = matches!(m, Message::EpisodeEnd { .. });
            out.push(m);
            if end && until_end {
                break;
            }
        }
        out
    }

    #[test]
    fn two_clients_receive_the_same_stream() {
        let gen = GeneratorConfig {
            grid_size: 48,
            min_room_side: 8,
            ..GeneratorConfig::default()
        };
        let scenario = Arc::new(generate_scenario(1, &gen).unwrap());
        let session = Session::new("srv", scenario, SessionConfig::default()).unwrap();
        let listener = bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            serve(
                session,
                listener,
                ServeConfig {
                    step_interval: Duration::from_millis(1),
                    exit_on_end: true,
                    idle_timeout: Some(Duration::from_secs(30)),
                    ..ServeConfig::default()
                },
            )
        });
        let a = TcpStream::connect(addr).unwrap();
        let b = TcpStream::connect(addr).unwrap();
        let mut ra = BufReader::new(a.try_clone().unwrap());
        let mut rb = BufReader::new(b.try_clone().unwrap());
        let mut first = String::new();
        ra.read_line(&mut first).unwrap();
        assert!(first.contains("\"type\":\"snapshot\""));
        let mut first_b = String::new();
        rb.read_line(&mut first_b).unwrap();
        assert!(first_b.contains("\"type\":\"snapshot\""));

        let mut w = a.try_clone().unwrap();
        w.write_all(b"{\"cmd\":\"resume\"}\n").unwrap();
        let ma = read_messages(ra, true);
        let mb = read_messages(rb, true);
        let summary = server.join().unwrap().unwrap();

        let broadcast = |v: &[Message]| -> Vec<Message> {
            v.iter().filter(|m| !matches!(m, Message::Ack { .. })).cloned().collect()
        };
        assert!(matches!(ma[0], Message::Ack { .. }));
        assert_eq!(broadcast(&ma), broadcast(&mb));
        let mut mirror = Mirror::default();
        mirror.apply(&serde_json::from_str(&first).unwrap());
        for m in &mb {
            mirror.apply(m);
        }
        assert_eq!(mirror.ended.as_deref(), Some(summary.checksum.as_str()));
        assert_eq!(mirror.checksum(), summary.checksum);
    }

    #[test]
    fn busy_port_is_reported() {
        let l = bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap().to_string();
        assert!(matches!(bind(&addr), Err(BridgeError::PortUnavailable(_))));
    }
}
