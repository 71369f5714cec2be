mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use semsearch::bridge::{bind, serve, Command, Message, Mirror, ServeConfig, Session, SessionConfig};
use semsearch::expert::{Dataset, Provenance};
use semsearch::learn::{train, TrainConfig};
use semsearch::topo::NodeId;

/// Frontier ids published at each revision of a message log.
fn frontier_log(log: &[Message]) -> BTreeMap<u64, Vec<NodeId>> {
    let mut m = BTreeMap::new();
    for msg in log {
        match msg {
            Message::Snapshot { revision, frontiers, .. } | Message::Delta { revision, frontiers, .. } => {
                m.insert(*revision, frontiers.iter().map(|f| f.id).collect());
            }
            _ => {}
        }
    }
    m
}

/// Steps a couple of times, intervenes on the last listed frontier at the
/// latest published revision, and repeats until `count` choices were made.
fn scripted_episode(session: &mut Session, log: &mut Vec<Message>, count: usize) {
    let mut done = 0;
    while done < count && !session.is_ended() {
        log.extend(session.handle(Command::Step { n: 2 }));
        log.extend(session.run_until_idle().unwrap());
        let mut mirror = Mirror::default();
        for m in log.iter() {
            mirror.apply(m);
        }
        if mirror.frontiers.len() < 2 || session.is_ended() {
            continue;
        }
        let (&rev, ids) = frontier_log(log).iter().next_back().map(|(r, v)| (r, v.clone())).unwrap();
        let reply = session.handle(Command::Intervene {
            frontier_id: *ids.last().unwrap(),
            revision: Some(rev),
        });
        assert!(matches!(reply[0], Message::Ack { .. }), "{reply:?}");
        log.extend(reply);
        done += 1;
    }
}

#[test]
fn three_interventions_match_logged_frontier_sets() {
    let mut s = Session::new("script", common::small(5), SessionConfig::default()).unwrap();
    let mut log = vec![s.snapshot()];
    scripted_episode(&mut s, &mut log, 3);
    let published = frontier_log(&log);
    let recs = s.records();
    assert_eq!(recs.len(), 3);
    for r in &recs {
        assert_eq!(r.provenance, Provenance::Human);
        let rev = r.revision.expect("human records carry a revision");
        let ids: Vec<NodeId> = r.candidates.iter().map(|c| c.frontier_id).collect();
        assert_eq!(&ids, published.get(&rev).expect("revision was published"));
        assert!(ids.contains(&r.chosen_frontier_id));
    }
    log.extend(s.handle(Command::Resume));
    log.extend(s.run_until_idle().unwrap());
    let mut mirror = Mirror::default();
    for m in &log {
        mirror.apply(&serde_json::from_str(&m.to_line()).unwrap());
    }
    assert_eq!(mirror.ended.as_deref(), Some(mirror.checksum().as_str()));
}

#[test]
fn human_dataset_over_three_episodes_trains() {
    let mut s = Session::new("human", common::small(6), SessionConfig::default()).unwrap();
    let mut log = vec![s.snapshot()];
    for ep in 0..3 {
        if ep > 0 {
            log.extend(s.handle(Command::Reset { seed: ep }));
        }
        scripted_episode(&mut s, &mut log, 2);
    }
    assert!(log.windows(2).all(|w| w[0].revision() < w[1].revision()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("human.jsonl");
    s.dataset().save(&path).unwrap();
    let ds = Dataset::load(&path).unwrap();
    assert_eq!(ds.records.len(), 6);
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let out = train(&ds, &cfg, 0).unwrap();
    assert!(out.final_nll <= out.initial_nll);
}

#[test]
fn served_session_records_choices_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("rec.jsonl");
    let session = Session::new("tcp", common::small(7), SessionConfig::default()).unwrap();
    let listener = bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let cfg = ServeConfig {
        step_interval: Duration::from_millis(1),
        exit_on_end: true,
        record: Some(record.clone()),
        idle_timeout: Some(Duration::from_secs(30)),
        ..ServeConfig::default()
    };
    let server = thread::spawn(move || serve(session, listener, cfg));
    let stream = TcpStream::connect(addr).unwrap();
    let mut w = stream.try_clone().unwrap();
    let mut lines = BufReader::new(stream).lines();
    let mut next = || -> Message { serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap() };
    let Message::Snapshot { revision, frontiers, .. } = next() else { panic!("snapshot first") };
    writeln!(w, "{{\"cmd\":\"intervene\",\"frontier_id\":{},\"revision\":{revision}}}", frontiers[0].id).unwrap();
    w.write_all(b"not json\n").unwrap();
    w.write_all(b"{\"cmd\":\"resume\"}\n").unwrap();
    let mut kinds = Vec::new();
    loop {
        let m = next();
        let end = matches!(m, Message::EpisodeEnd { .. });
        kinds.push(serde_json::to_value(&m).unwrap()["type"].as_str().unwrap().to_string());
        if end {
            break;
        }
    }
    assert_eq!(&kinds[..2], ["ack", "tour"]);
    assert!(kinds.contains(&"error".to_string()));
    let summary = server.join().unwrap().unwrap();
    assert_eq!(summary.records, 1);
    let ds = Dataset::load(&record).unwrap();
    assert_eq!(ds.records[0].provenance, Provenance::Human);
}
