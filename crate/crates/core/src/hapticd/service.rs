//! Real-time service: the loop thread, UDP ingress/egress and the websocket
//! bridge.
//!
//! Threads:
//! - loop: owns the [`Simulation`], paces ticks against the wall clock, reads
//!   the newest command from a single-slot mailbox and publishes a snapshot
//!   every publish interval;
//! - udp: receives commands (malformed datagrams are counted and dropped) and
//!   sends state packets to every address that has sent a valid command;
//! - websocket acceptor plus one thread per browser client.
//!
//! Published snapshots go through bounded per-subscriber queues; a full queue
//! drops the snapshot for that subscriber and never stalls the loop.

use std::collections::HashSet;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use nalgebra::Vector3;

use super::bridge::{frame_message, scene_message, ClientMessage};
use super::config::ServiceConfig;
use super::protocol::{CommandPacket, StatePacket};
use super::sim::{HapticFrame, Scene, SimParams, Simulation};
use super::HapticError;
use crate::rig::{GripPose, RigConfig};
use crate::scene::PuttySample;

const SUBSCRIBER_QUEUE: usize = 8;
const MAX_UDP_SUBSCRIBERS: usize = 64;
const POLL: Duration = Duration::from_millis(5);
/// Falling further behind than this resets the pacing clock.
const MAX_LAG: Duration = Duration::from_millis(100);

#[derive(Debug, Default)]
pub struct ServiceStats {
    pub ticks: AtomicU64,
    pub commands: AtomicU64,
    pub malformed: AtomicU64,
    pub published: AtomicU64,
    pub dropped: AtomicU64,
    pub step_errors: AtomicU64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct StatsSnapshot {
    pub ticks: u64,
    pub commands: u64,
    pub malformed: u64,
    pub published: u64,
    pub dropped: u64,
    pub step_errors: u64,
}

impl ServiceStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        StatsSnapshot {
            ticks: get(&self.ticks),
            commands: get(&self.commands),
            malformed: get(&self.malformed),
            published: get(&self.published),
            dropped: get(&self.dropped),
            step_errors: get(&self.step_errors),
        }
    }
}

/// Newest command wins.
#[derive(Default)]
struct Mailbox {
    slot: Mutex<Option<(CommandPacket, Instant)>>,
}

impl Mailbox {
    fn put(&self, cmd: CommandPacket) {
        *self.slot.lock().unwrap() = Some((cmd, Instant::now()));
    }

    fn take(&self) -> Option<(CommandPacket, Instant)> {
        self.slot.lock().unwrap().take()
    }
}

/// What subscribers receive: the same snapshot in both encodings.
pub struct Published {
    pub tick: u64,
    pub packet: Vec<u8>,
    pub json: String,
}

#[derive(Default)]
struct Broadcaster {
    subscribers: Mutex<Vec<Sender<Arc<Published>>>>,
}

impl Broadcaster {
    fn subscribe(&self) -> Receiver<Arc<Published>> {
        let (tx, rx) = bounded(SUBSCRIBER_QUEUE);
        self.subscribers.lock().unwrap().push(tx);
        rx
    }

    fn publish(&self, msg: Arc<Published>, stats: &ServiceStats) {
        self.subscribers.lock().unwrap().retain(|tx| match tx.try_send(msg.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                stats.dropped.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
        stats.published.fetch_add(1, Ordering::Relaxed);
    }
}

struct Shared {
    stop: AtomicBool,
    stats: ServiceStats,
    mailbox: Mailbox,
    broadcaster: Broadcaster,
    scene_json: String,
}

pub struct ServiceHandle {
    pub udp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn stats(&self) -> StatsSnapshot {
        self.shared.stats.snapshot()
    }

    pub fn is_running(&self) -> bool {
        !self.shared.stop.load(Ordering::Relaxed)
    }

    /// Signals every thread and waits for them.
    pub fn stop(mut self) -> StatsSnapshot {
        self.shutdown();
        self.stats()
    }

    fn shutdown(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Loop settings that do not come from the simulation itself.
#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub udp: String,
    pub websocket: String,
    pub publish_interval: Duration,
    pub silence_timeout: Duration,
    /// Grip pose held until the first command arrives.
    pub home: GripPose,
}

impl ServiceOptions {
    pub fn from_config(cfg: &ServiceConfig) -> Self {
        Self {
            udp: cfg.network.udp.clone(),
            websocket: cfg.network.websocket.clone(),
            publish_interval: cfg.publish_interval(),
            silence_timeout: cfg.silence_timeout(),
            home: GripPose::at(Vector3::from(cfg.loop_.home)),
        }
    }
}

/// Loads everything named in `config` and starts the service.
pub fn serve(config: &ServiceConfig) -> Result<ServiceHandle, HapticError> {
    let rig = config.load_rig()?;
    let scene = config.load_scene()?;
    let params = config.params()?;
    serve_with(rig, scene, params, ServiceOptions::from_config(config))
}

pub fn serve_with(
    rig: RigConfig,
    scene: Scene,
    params: SimParams,
    opts: ServiceOptions,
) -> Result<ServiceHandle, HapticError> {
    let bind_err = |addr: &str, e: std::io::Error| HapticError::Bind {
        addr: addr.to_string(),
        message: e.to_string(),
    };
    let udp = UdpSocket::bind(&opts.udp).map_err(|e| bind_err(&opts.udp, e))?;
    udp.set_read_timeout(Some(POLL)).map_err(|e| bind_err(&opts.udp, e))?;
    let tcp = TcpListener::bind(&opts.websocket).map_err(|e| bind_err(&opts.websocket, e))?;
    tcp.set_nonblocking(true).map_err(|e| bind_err(&opts.websocket, e))?;
    let udp_addr = udp.local_addr().map_err(|e| bind_err(&opts.udp, e))?;
    let ws_addr = tcp.local_addr().map_err(|e| bind_err(&opts.websocket, e))?;

    let sim = Simulation::new(rig, scene, params)?;
    let scene_json = serde_json::to_string(&scene_message(sim.scene(), sim.rig(), params.putty.radius))
        .expect("scene serializes");
    let shared = Arc::new(Shared {
        stop: AtomicBool::new(false),
        stats: ServiceStats::default(),
        mailbox: Mailbox::default(),
        broadcaster: Broadcaster::default(),
        scene_json,
    });

    let mut threads = Vec::new();
    let udp_rx = shared.broadcaster.subscribe();
    {
        let shared = shared.clone();
        threads.push(spawn("shw-loop", move || run_loop(sim, opts, &shared)));
    }
    {
        let shared = shared.clone();
        threads.push(spawn("shw-udp", move || run_udp(udp, udp_rx, &shared)));
    }
    {
        let shared = shared.clone();
        threads.push(spawn("shw-ws", move || run_ws_acceptor(tcp, &shared)));
    }
    log::info!("serving: udp {udp_addr}, websocket ws://{ws_addr}");
    Ok(ServiceHandle {
        udp_addr,
        ws_addr,
        shared,
        threads,
    })
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    thread::Builder::new()
        .name(name.into())
        .spawn(f)
        .expect("thread spawn")
}

fn run_loop(mut sim: Simulation, opts: ServiceOptions, shared: &Shared) {
    let dt = Duration::from_nanos(sim.params().dt_ns);
    let publish_every = (opts.publish_interval.as_nanos() / dt.as_nanos()).max(1) as u64;
    let mut command = (opts.home, false);
    let mut last_heard: Option<Instant> = None;
    let mut pending_bead: Vec<PuttySample> = Vec::new();
    let mut clock = Instant::now();
    let mut since_reset = 0u32;

    while !shared.stop.load(Ordering::Relaxed) {
        if let Some((cmd, at)) = shared.mailbox.take() {
            command = (cmd.pose(), cmd.trigger);
            last_heard = Some(at);
        }
        // silent client: keep the pose, stop extruding
        if last_heard.is_some_and(|t| t.elapsed() > opts.silence_timeout) {
            command.1 = false;
        }
        match sim.step(&command.0, command.1) {
            Ok(frame) => {
                shared.stats.ticks.fetch_add(1, Ordering::Relaxed);
                pending_bead.extend_from_slice(&frame.bead_delta);
                if frame.tick % publish_every == 0 {
                    let frame = HapticFrame {
                        bead_delta: std::mem::take(&mut pending_bead),
                        ..frame
                    };
                    let msg = Published {
                        tick: frame.tick,
                        packet: StatePacket::from_frame(&frame).encode(),
                        json: serde_json::to_string(&frame_message(&frame, sim.scene(), sim.rig()))
                            .expect("frame serializes"),
                    };
                    shared.broadcaster.publish(Arc::new(msg), &shared.stats);
                }
            }
            Err(e) => {
                // e.g. a grip commanded onto a motor; fall back to where it was
                shared.stats.step_errors.fetch_add(1, Ordering::Relaxed);
                log::warn!("step rejected: {e}");
                command.0 = sim.current_pose().unwrap_or(opts.home);
            }
        }

        since_reset += 1;
        let deadline = clock + dt * since_reset;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > MAX_LAG {
            clock = now;
            since_reset = 0;
        }
    }
}

fn run_udp(socket: UdpSocket, frames: Receiver<Arc<Published>>, shared: &Shared) {
    let mut subscribers: HashSet<SocketAddr> = HashSet::new();
    let mut buf = [0u8; 2048];
    while !shared.stop.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => match CommandPacket::decode(&buf[..n]) {
                Ok(cmd) => {
                    shared.stats.commands.fetch_add(1, Ordering::Relaxed);
                    shared.mailbox.put(cmd);
                    if subscribers.len() < MAX_UDP_SUBSCRIBERS {
                        subscribers.insert(from);
                    }
                }
                Err(e) => {
                    shared.stats.malformed.fetch_add(1, Ordering::Relaxed);
                    log::debug!("dropped datagram from {from}: {e}");
                }
            },
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => log::debug!("udp receive: {e}"),
        }
        while let Ok(msg) = frames.try_recv() {
            for addr in &subscribers {
                if let Err(e) = socket.send_to(&msg.packet, addr) {
                    log::debug!("udp send to {addr}: {e}");
                }
            }
        }
    }
}

fn run_ws_acceptor(listener: TcpListener, shared: &Arc<Shared>) {
    let mut clients: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("bridge client {peer}");
                let rx = shared.broadcaster.subscribe();
                let shared = shared.clone();
                clients.push(spawn("shw-ws-client", move || {
                    if let Err(e) = run_ws_client(stream, rx, &shared) {
                        log::debug!("bridge client {peer}: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => log::warn!("bridge accept: {e}"),
        }
        clients.retain(|h| !h.is_finished());
    }
    for h in clients {
        let _ = h.join();
    }
}

fn run_ws_client(
    stream: TcpStream,
    frames: Receiver<Arc<Published>>,
    shared: &Shared,
) -> Result<(), Box<dyn std::error::Error>> {
    use tungstenite::{Error as WsError, Message};

    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let mut ws = tungstenite::accept(stream)?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    ws.send(Message::text(shared.scene_json.clone()))?;
    while !shared.stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => match ClientMessage::parse(&text) {
                Ok(msg) => {
                    shared.stats.commands.fetch_add(1, Ordering::Relaxed);
                    shared.mailbox.put(msg.into_command());
                }
                Err(e) => {
                    shared.stats.malformed.fetch_add(1, Ordering::Relaxed);
                    log::debug!("bad bridge message: {e}");
                }
            },
            Ok(Message::Binary(_)) => {
                shared.stats.malformed.fetch_add(1, Ordering::Relaxed);
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(WsError::ConnectionClosed | WsError::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
        while let Ok(msg) = frames.try_recv() {
            ws.send(Message::text(msg.json.clone()))?;
        }
    }
    let _ = ws.close(None);
    Ok(())
}
