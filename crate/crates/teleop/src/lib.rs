//! Real-time teleoperation service.
//!
//! One worker thread owns the [`TeleopSession`] and runs it at wall-clock
//! rate. Clients talk to it over a websocket at `/stream`: commands go into a
//! bounded queue, frames come back through a broadcast channel. Static files
//! (the browser console) are served at `/`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use crossbeam::queue::ArrayQueue;
use futures::{SinkExt, StreamExt};
use snakebot_core::teleop::{write_command_log, LoggedCommand};
use snakebot_core::{Command, ServerMessage, SimConfig, TeleopSession};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

pub const DEFAULT_DECIMATION: u64 = 5;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;
const BROADCAST_CAPACITY: usize = 256;

const FALLBACK_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>snakebot teleop</title></head>
<body>
<p>No UI bundle found. The state stream is at <code>/stream</code>.</p>
<pre id="out"></pre>
<script>
const ws = new WebSocket(`ws://${location.host}/stream`);
ws.onmessage = (e) => {
  const m = JSON.parse(e.data);
  if (m.type === "state") {
    document.getElementById("out").textContent =
      `seq ${m.seq}  t ${m.t.toFixed(2)} s  x ${m.pose.x.toFixed(1)}  y ${m.pose.y.toFixed(1)}  ` +
      `speed ${m.speed.toFixed(1)} mm/s  gait ${m.gait}  bias ${m.bias}`;
  }
};
</script>
</body></html>
"#;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("could not bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] snakebot_core::Error),
    #[error("simulation worker panicked")]
    WorkerPanicked,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sim: SimConfig,
    pub decimation: u64,
    /// Append every applied command here as JSON lines.
    pub record: Option<PathBuf>,
    /// Directory with the built UI bundle.
    pub static_dir: Option<PathBuf>,
    pub queue_capacity: usize,
}

impl ServiceConfig {
    pub fn new(sim: SimConfig) -> Self {
        Self {
            sim,
            decimation: DEFAULT_DECIMATION,
            record: None,
            static_dir: None,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

/// Counters reported by the worker when it exits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub ticks: u64,
    pub frames_sent: u64,
    pub frames_skipped: u64,
}

struct Envelope {
    command: Command,
    /// Private channel back to the sender, for errors.
    reply: Option<mpsc::UnboundedSender<Utf8Bytes>>,
}

/// Bounded command queue; when full, the oldest command is dropped.
#[derive(Clone)]
struct CommandQueue {
    inner: Arc<ArrayQueue<Envelope>>,
    frames: broadcast::Sender<Utf8Bytes>,
}

impl CommandQueue {
    fn push(&self, env: Envelope) {
        if let Some(dropped) = self.inner.force_push(env) {
            let msg = ServerMessage::Warning {
                message: format!(
                    "command queue full, dropped {}",
                    command_name(&dropped.command)
                ),
            };
            let _ = self.frames.send(msg.to_json().into());
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SetBias { .. } => "set_bias",
        Command::SetGait { .. } => "set_gait",
        Command::Start => "start",
        Command::Stop => "stop",
        Command::Reset => "reset",
        Command::SetParam { .. } => "set_param",
    }
}

fn run_worker(
    mut session: TeleopSession,
    queue: Arc<ArrayQueue<Envelope>>,
    frames: broadcast::Sender<Utf8Bytes>,
    mut record: Option<BufWriter<File>>,
    stop: Arc<AtomicBool>,
) -> Result<WorkerStats, ServiceError> {
    let dt = Duration::from_secs_f64(session.dt());
    let slack = dt * session.decimation() as u32;
    let start = Instant::now();
    let mut stats = WorkerStats::default();
    while !stop.load(Ordering::Relaxed) {
        while let Some(env) = queue.pop() {
            let tick = session.tick_count();
            match session.apply(&env.command) {
                Ok(()) => {
                    if let Some(w) = record.as_mut() {
                        let entry = LoggedCommand {
                            tick,
                            command: env.command,
                        };
                        write_command_log(&entry, &mut *w)?;
                        w.flush()?;
                    }
                }
                Err(e) => {
                    let msg: Utf8Bytes = ServerMessage::Error {
                        message: e.to_string(),
                    }
                    .to_json()
                    .into();
                    match env.reply {
                        Some(tx) => {
                            let _ = tx.send(msg);
                        }
                        None => {
                            let _ = frames.send(msg);
                        }
                    }
                }
            }
        }

        let out = session.tick();
        stats.ticks += 1;
        if let Some(e) = out.error {
            let msg = ServerMessage::Error {
                message: format!("simulation stopped: {e}"),
            };
            let _ = frames.send(msg.to_json().into());
        }
        let deadline = start + Duration::from_secs_f64(dt.as_secs_f64() * stats.ticks as f64);
        let now = Instant::now();
        if let Some(frame) = out.frame {
            if now > deadline + slack {
                stats.frames_skipped += 1;
            } else {
                let _ = frames.send(ServerMessage::State(frame).to_json().into());
                stats.frames_sent += 1;
            }
        }
        if now < deadline {
            std::thread::sleep(deadline - now);
        }
    }
    Ok(stats)
}

#[derive(Clone)]
struct AppState {
    queue: CommandQueue,
    frames: broadcast::Sender<Utf8Bytes>,
}

async fn stream(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let (mut sink, mut incoming) = socket.split();
    let mut frames = state.frames.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Utf8Bytes>();
    loop {
        let out = tokio::select! {
            msg = incoming.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    match Command::parse(text.as_str()) {
                        Ok(command) => state.queue.push(Envelope { command, reply: Some(reply_tx.clone()) }),
                        Err(e) => {
                            let _ = reply_tx.send(ServerMessage::Error { message: e.to_string() }.to_json().into());
                        }
                    }
                    continue;
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
            frame = frames.recv() => match frame {
                Ok(f) => f,
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(reply) = reply_rx.recv() => reply,
        };
        if sink.send(Message::Text(out)).await.is_err() {
            break;
        }
    }
}

async fn fallback_page() -> Html<&'static str> {
    Html(FALLBACK_PAGE)
}

fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().route("/stream", get(stream));
    let app = match static_dir.filter(|d| d.join("index.html").is_file()) {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(fallback_page)),
    };
    app.with_state(state)
}

/// A running service.
pub struct Service {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<Result<WorkerStats, ServiceError>>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Service {
    /// Binds, spawns the simulation worker and starts accepting clients.
    pub async fn start(config: ServiceConfig, bind: &str) -> Result<Service, ServiceError> {
        config.sim.validate()?;
        let session = TeleopSession::new(&config.sim, config.decimation)?;
        let listener = TcpListener::bind(bind).await.map_err(|source| ServiceError::Bind {
            addr: bind.to_string(),
            source,
        })?;
        let addr = listener.local_addr()?;
        let record = match &config.record {
            Some(path) => Some(BufWriter::new(File::create(path)?)),
            None => None,
        };

        let (frames, _) = broadcast::channel(BROADCAST_CAPACITY);
        let inner = Arc::new(ArrayQueue::new(config.queue_capacity.max(1)));
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let (inner, frames, stop) = (inner.clone(), frames.clone(), stop.clone());
            std::thread::Builder::new()
                .name("sim-worker".into())
                .spawn(move || run_worker(session, inner, frames, record, stop))?
        };

        let state = AppState {
            queue: CommandQueue {
                inner,
                frames: frames.clone(),
            },
            frames,
        };
        let app = router(state, config.static_dir);
        let server = tokio::spawn(async move { axum::serve(listener, app).await });
        Ok(Service {
            addr,
            stop,
            worker: Some(worker),
            server,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs until the server or the worker fails.
    pub async fn wait(mut self) -> Result<(), ServiceError> {
        (&mut self.server).await.map_err(|_| ServiceError::WorkerPanicked)??;
        self.shutdown().await.map(|_| ())
    }

    /// Stops the worker and the server, returning the worker's counters.
    pub async fn shutdown(mut self) -> Result<WorkerStats, ServiceError> {
        self.stop.store(true, Ordering::Relaxed);
        self.server.abort();
        let worker = self.worker.take().expect("worker joined once");
        tokio::task::spawn_blocking(move || worker.join())
            .await
            .map_err(|_| ServiceError::WorkerPanicked)?
            .map_err(|_| ServiceError::WorkerPanicked)?
    }
}

/// Serves until terminated.
pub async fn serve(config: ServiceConfig, bind: &str) -> Result<(), ServiceError> {
    Service::start(config, bind).await?.wait().await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_queue_drops_oldest_with_warning() {
        let (frames, mut rx) = broadcast::channel(8);
        let queue = CommandQueue {
            inner: Arc::new(ArrayQueue::new(2)),
            frames,
        };
        for v in [1.0, 2.0, 3.0] {
            queue.push(Envelope {
                command: Command::SetBias { value: v },
                reply: None,
            });
        }
        let warning = rx.try_recv().unwrap();
        assert!(warning.as_str().contains(r#""type":"warning""#));
        let left: Vec<_> = std::iter::from_fn(|| queue.inner.pop()).map(|e| e.command).collect();
        assert_eq!(left, vec![Command::SetBias { value: 2.0 }, Command::SetBias { value: 3.0 }]);
    }
}
