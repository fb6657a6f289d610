//! Network front for the master: one thread per worker connection, all of
//! them funneling into the mutex-guarded state machine. Serving ends when
//! the budget is spent and the last connection has drained, or never, for
//! an open-ended master.

use super::master::MasterState;
use super::protocol::{read_message, write_message, Message, ProtocolError};
use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

const ACCEPT_POLL: Duration = Duration::from_millis(5);

/// Answers workers until the budget is exhausted and every connection has
/// closed, then writes a final checkpoint. The listener is polled so the
/// loop can notice completion without one last phantom connection.
pub fn serve(listener: TcpListener, master: Arc<Mutex<MasterState>>) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let active = Arc::new(AtomicUsize::new(0));
    let mut handles = Vec::new();
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                let master = Arc::clone(&master);
                let active = Arc::clone(&active);
                active.fetch_add(1, Ordering::SeqCst);
                handles.push(thread::spawn(move || {
                    serve_connection(stream, &master);
                    active.fetch_sub(1, Ordering::SeqCst);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                let drained = active.load(Ordering::SeqCst) == 0
                    && master.lock().unwrap().budget_exhausted();
                if drained {
                    break;
                }
                thread::sleep(ACCEPT_POLL);
            }
            Err(e) => return Err(e),
        }
    }
    for handle in handles {
        let _ = handle.join();
    }
    let master = master.lock().unwrap();
    master.save_checkpoint().map_err(io::Error::other)
}

/// One worker's conversation. Any protocol violation (a bad frame, an
/// unparseable or mismatched result) ends this connection and nothing
/// else; the master's state stays consistent.
fn serve_connection(mut stream: TcpStream, master: &Mutex<MasterState>) {
    let requester = master.lock().unwrap().register_requester();
    loop {
        match read_message(&mut stream) {
            Ok(Some(Message::RequestWork)) => {
                let unit = master.lock().unwrap().next_assignment(requester);
                let reply = match unit {
                    Some(unit) => Message::WorkUnit(unit.to_text()),
                    None => Message::Shutdown,
                };
                let done = reply == Message::Shutdown;
                if write_message(&mut stream, &reply).is_err() || done {
                    return;
                }
            }
            Ok(Some(Message::ReportResult(text))) => {
                let accepted = master.lock().unwrap().receive_result_text(&text);
                if accepted.is_err() || write_message(&mut stream, &Message::Ack).is_err() {
                    return;
                }
            }
            // Anything else out of a worker's mouth is a violation; a
            // clean close or an I/O failure also ends the conversation.
            Ok(Some(_)) | Ok(None) | Err(ProtocolError::Malformed(_)) | Err(ProtocolError::Io(_)) => {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::distribution::{
        run_worker, MasterOptions, ValidationEvent, WorkerOptions, WorkerSummary,
    };
    use crate::evolution::SearchConfig;

    fn tiny_dataset() -> Dataset {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8u8 {
            for p in 0..36u8 {
                pixels.push(i.wrapping_mul(29).wrapping_add(p.wrapping_mul(5)));
            }
            labels.push(i % 2);
        }
        Dataset::from_parts(pixels, labels, 6, 6, 0).unwrap()
    }

    fn config(quorum: u32) -> SearchConfig {
        SearchConfig {
            population_size: 3,
            input_x: 6,
            input_y: 6,
            classes: 2,
            epochs: 4,
            quorum,
            seed: 77,
            ..SearchConfig::default()
        }
    }

    fn spawn_master(
        quorum: u32,
        budget: u64,
    ) -> (String, Arc<Mutex<MasterState>>, thread::JoinHandle<io::Result<()>>) {
        let master = Arc::new(Mutex::new(
            MasterState::new(
                config(quorum),
                MasterOptions {
                    budget,
                    ..MasterOptions::default()
                },
            )
            .unwrap(),
        ));
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = {
            let master = Arc::clone(&master);
            thread::spawn(move || serve(listener, master))
        };
        (addr, master, server)
    }

    #[test]
    fn one_worker_drains_the_budget_and_shuts_down() {
        let (addr, master, server) = spawn_master(1, 5);
        let data = tiny_dataset();
        let summary = run_worker(&addr, &data, &WorkerOptions::default()).unwrap();
        assert_eq!(summary, WorkerSummary { units_completed: 5 });
        server.join().unwrap().unwrap();
        let master = Arc::try_unwrap(master).ok().unwrap().into_inner().unwrap();
        assert_eq!(master.results_received(), 5);
        assert_eq!(master.search().completed_trainings(), 5);
    }

    #[test]
    fn two_workers_with_quorum_two_agree_on_every_insertion() {
        let (addr, master, server) = spawn_master(2, 8);
        let data = tiny_dataset();
        let workers: Vec<_> = (0..2)
            .map(|_| {
                let addr = addr.clone();
                let data = data.clone();
                thread::spawn(move || run_worker(&addr, &data, &WorkerOptions::default()))
            })
            .collect();
        let mut completed = 0;
        for w in workers {
            completed += w.join().unwrap().unwrap().units_completed;
        }
        server.join().unwrap().unwrap();
        let master = Arc::try_unwrap(master).ok().unwrap().into_inner().unwrap();
        assert_eq!(completed, master.results_received());
        let mut validated = 0;
        for event in master.events() {
            match event {
                ValidationEvent::Validated { agreeing, .. } => {
                    assert_eq!(*agreeing, 2, "every insertion needs two agreeing digests");
                    validated += 1;
                }
                ValidationEvent::Flagged { .. } | ValidationEvent::Reissued { .. } => {
                    panic!("honest workers never disagree: {event}");
                }
                ValidationEvent::Late { .. } => {}
            }
        }
        assert_eq!(validated as u64, master.search().completed_trainings());
        assert!(validated >= 4, "budget 8 at quorum 2 validates at least 4 units");
    }

    #[test]
    fn a_corrupt_worker_is_flagged_on_every_unit_it_touches() {
        // The corrupt worker leaves after three units so the honest pair has
        // budget left to outvote every round it poisoned.
        let (addr, master, server) = spawn_master(2, 20);
        let data = tiny_dataset();
        let honest: Vec<_> = (0..2)
            .map(|_| {
                let addr = addr.clone();
                let data = data.clone();
                thread::spawn(move || run_worker(&addr, &data, &WorkerOptions::default()))
            })
            .collect();
        let corrupt = {
            let addr = addr.clone();
            let data = data.clone();
            thread::spawn(move || {
                run_worker(
                    &addr,
                    &data,
                    &WorkerOptions {
                        perturb_first_weight: Some(1e-3),
                        unit_limit: Some(3),
                        ..WorkerOptions::default()
                    },
                )
            })
        };
        let corrupted_units = corrupt.join().unwrap().unwrap().units_completed;
        assert_eq!(corrupted_units, 3);
        for w in honest {
            w.join().unwrap().unwrap();
        }
        server.join().unwrap().unwrap();
        let master = Arc::try_unwrap(master).ok().unwrap().into_inner().unwrap();
        let flagged = master
            .events()
            .iter()
            .filter(|e| matches!(e, ValidationEvent::Flagged { .. }))
            .count() as u64;
        // Each poisoned round ends with two honest digests agreeing and the
        // odd one out flagged; a lone corrupt vote can never self-validate
        // because both copies of a unit go to different connections.
        assert_eq!(flagged, corrupted_units);
        for event in master.events() {
            match event {
                ValidationEvent::Validated { agreeing, .. } => assert_eq!(*agreeing, 2),
                ValidationEvent::Reissued { .. } => {
                    panic!("one corrupt voice cannot collapse a round")
                }
                _ => {}
            }
        }
    }

    #[test]
    fn garbage_frames_close_only_the_offending_connection() {
        let (addr, master, server) = spawn_master(1, 2);
        // A hostile peer speaks nonsense and is dropped.
        {
            use std::io::Write as _;
            let mut bad = TcpStream::connect(&addr).unwrap();
            bad.write_all(b"convevo/9 NOISE 0\n").unwrap();
            let mut buf = Vec::new();
            let _ = io::Read::read_to_end(&mut bad, &mut buf);
            assert!(buf.is_empty(), "violations earn no reply");
        }
        // The master is unharmed and a real worker finishes the run.
        let data = tiny_dataset();
        let summary = run_worker(&addr, &data, &WorkerOptions::default()).unwrap();
        assert_eq!(summary.units_completed, 2);
        server.join().unwrap().unwrap();
        drop(master);
    }
}
