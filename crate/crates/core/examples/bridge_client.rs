//! Starts a bridge server in-process, connects as a scripted client,
//! steps the episode, intervenes once, then runs to the end and checks the
//! replayed map against the published checksum.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use semsearch::bridge::{bind, serve, Message, Mirror, ServeConfig, Session, SessionConfig};
use semsearch::scenario::{generate_scenario, GeneratorConfig};

fn main() {
    let gen = GeneratorConfig {
        grid_size: 60,
        min_room_side: 9,
        ..GeneratorConfig::default()
    };
    let scenario = Arc::new(generate_scenario(2, &gen).unwrap());
    let session = Session::new("demo", scenario, SessionConfig::default()).unwrap();
    let listener = bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let cfg = ServeConfig {
        step_interval: Duration::from_millis(2),
        exit_on_end: true,
        ..ServeConfig::default()
    };
    let server = thread::spawn(move || serve(session, listener, cfg));

    let stream = TcpStream::connect(addr).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut lines = BufReader::new(stream).lines();
    let mut next = move || -> Message { serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap() };
    let mut mirror = Mirror::default();

    let snap = next();
    mirror.apply(&snap);
    println!("connected at revision {}", snap.revision());
    writer.write_all(b"{\"cmd\":\"step\",\"n\":3}\n").unwrap();
    let mut last = snap.revision();
    let mut deltas = 0;
    while deltas < 3 {
        let m = next();
        mirror.apply(&m);
        last = m.revision();
        if matches!(m, Message::Delta { .. }) {
            deltas += 1;
        }
    }
    let target = *mirror.frontiers.last().expect("frontiers remain");
    writeln!(writer, "{{\"cmd\":\"intervene\",\"frontier_id\":{target},\"revision\":{last}}}").unwrap();
    writer.write_all(b"{\"cmd\":\"resume\"}\n").unwrap();
    loop {
        let m = next();
        mirror.apply(&m);
        match &m {
            Message::Ack { command, revision } => println!("ack {command} at {revision}"),
            Message::Error { message, .. } => println!("error: {message}"),
            Message::EpisodeEnd { outcome, steps, checksum, .. } => {
                println!("episode ended {outcome:?} after {steps} steps");
                println!("replayed checksum matches: {}", mirror.checksum() == *checksum);
                break;
            }
            _ => {}
        }
    }
    let summary = server.join().unwrap().unwrap();
    println!("server recorded {} human choices", summary.records);
}
