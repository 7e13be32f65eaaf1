//! Live session over WebSocket: the frame loop publishes decimated frame
//! snapshots into a latest-frame slot, and client threads forward steering
//! inputs into a mailbox drained before each physics step.

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use tungstenite::{Message as WsMessage, WebSocket};

use crate::error::{Error, Result};
use crate::protocol::{parse_input, FrameMessage, InputMessage, Message};
use crate::sim::Simulation;

const POLL: Duration = Duration::from_millis(5);

/// Newest published frame; older ones are simply replaced.
#[derive(Debug, Default)]
pub struct FrameSlot {
    inner: Mutex<(u64, Option<Arc<String>>)>,
}

impl FrameSlot {
    pub fn publish(&self, json: String) {
        let mut g = self.inner.lock().unwrap();
        g.0 += 1;
        g.1 = Some(Arc::new(json));
    }

    /// The latest frame if it is newer than `seen`.
    pub fn newer_than(&self, seen: u64) -> Option<(u64, Arc<String>)> {
        let g = self.inner.lock().unwrap();
        match &g.1 {
            Some(f) if g.0 > seen => Some((g.0, f.clone())),
            _ => None,
        }
    }
}

/// Latest steering input per body id.
#[derive(Debug, Default)]
pub struct Mailbox {
    inner: Mutex<BTreeMap<u32, InputMessage>>,
}

impl Mailbox {
    pub fn post(&self, m: InputMessage) {
        self.inner.lock().unwrap().insert(m.id, m);
    }

    pub fn drain(&self) -> Vec<InputMessage> {
        std::mem::take(&mut *self.inner.lock().unwrap()).into_values().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// Stop after this many frames; `None` runs until the process exits.
    pub frames: Option<usize>,
    /// Sleep so simulated time does not outrun wall time.
    pub realtime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeSummary {
    pub frames: u64,
    pub published: u64,
    pub inputs_applied: u64,
    pub inputs_rejected: u64,
}

pub struct StreamServer {
    listener: TcpListener,
}

impl StreamServer {
    pub fn bind(addr: impl Into<SocketAddr>) -> Result<Self> {
        let addr = addr.into();
        let listener = TcpListener::bind(addr)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("cannot bind {addr}: {e}"))))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs the frame loop on the calling thread while serving clients.
    pub fn run(self, mut sim: Simulation, options: ServeOptions) -> Result<ServeSummary> {
        let slot = Arc::new(FrameSlot::default());
        let mailbox = Arc::new(Mailbox::default());
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let (slot, mailbox, stop) = (slot.clone(), mailbox.clone(), stop.clone());
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, slot, mailbox, stop))
        };

        let dt = sim.config.dt;
        let every = ((1.0 / (sim.config.stream.rate_hz * dt)).round() as u64).max(1);
        let res = sim.config.stream.res;
        let (origin, spacing, out_res) = sim.output_grid();
        let spacing = spacing * out_res as f64 / res as f64;
        let mut summary = ServeSummary {
            frames: 0,
            published: 0,
            inputs_applied: 0,
            inputs_rejected: 0,
        };
        let start = Instant::now();
        let result = (|| -> Result<()> {
            while options.frames.is_none_or(|n| (summary.frames as usize) < n) {
                for m in mailbox.drain() {
                    if sim.steer(m.id, m.thrust, m.rudder) {
                        summary.inputs_applied += 1;
                    } else {
                        warn!("input for unknown body {}", m.id);
                        summary.inputs_rejected += 1;
                    }
                }
                sim.step()?;
                summary.frames = sim.frame();
                if (summary.frames - 1).is_multiple_of(every) {
                    let field = sim.composite_grid(origin, spacing, res);
                    let msg = Message::Frame(FrameMessage::new(sim.time(), &field, &sim.body_poses()));
                    slot.publish(msg.to_json());
                    summary.published += 1;
                }
                if options.realtime {
                    let ahead = Duration::from_secs_f64(sim.time()).saturating_sub(start.elapsed());
                    thread::sleep(ahead);
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        result.map(|_| summary)
    }
}

fn accept_loop(listener: TcpListener, slot: Arc<FrameSlot>, mailbox: Arc<Mailbox>, stop: Arc<AtomicBool>) {
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                info!("viewer connected from {peer}");
                let (slot, mailbox, stop) = (slot.clone(), mailbox.clone(), stop.clone());
                clients.push(thread::spawn(move || {
                    if let Err(e) = serve_client(stream, &slot, &mailbox, &stop) {
                        info!("viewer {peer} left: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn serve_client(stream: TcpStream, slot: &FrameSlot, mailbox: &Mailbox, stop: &AtomicBool) -> Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> =
        tungstenite::accept(stream).map_err(|e| Error::Protocol(format!("handshake: {e}")))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut seen = 0;
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(WsMessage::Text(text)) => match parse_input(text.as_str()) {
                Ok(m) => mailbox.post(m),
                Err(e) => warn!("rejected client message: {e}"),
            },
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(Error::Protocol(e.to_string())),
        }
        if let Some((seq, frame)) = slot.newer_than(seen) {
            ws.send(WsMessage::text(frame.as_str()))
                .map_err(|e| Error::Protocol(e.to_string()))?;
            seen = seq;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
