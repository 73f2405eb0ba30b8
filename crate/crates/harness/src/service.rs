//! WebSocket bridge (`/ws`) between a live session and operator clients.
//!
//! The session runs on its own thread. Inbound messages reach it through a
//! bounded queue; outbound events fan out through a bounded broadcast, so a
//! slow or absent client never stalls the loop (it loses the oldest events
//! instead).

use crate::error::{HarnessError, Result};
use crate::live::{run_session, session_info, LiveOptions, Sinks};
use crate::protocol::{Inbound, Outbound, SessionSummary, PROTOCOL_VERSION};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use neuroarm_core::acquisition::Recording;
use neuroarm_core::control::ControllerConfig;
use neuroarm_models::Ensemble;
use std::io::Write;
use std::net::SocketAddr;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::sync::broadcast;

pub const PROTOCOL_NAME: &str = "neuroarm-ws";

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub bind: String,
    pub port: u16,
    pub wait_for_client: bool,
    pub outbound_capacity: usize,
    pub inbound_capacity: usize,
}

#[derive(Clone)]
struct Shared {
    hello: Arc<String>,
    events: broadcast::Sender<(bool, Arc<String>)>,
    inbound: SyncSender<Inbound>,
    connected: Arc<Mutex<Option<std::sync::mpsc::Sender<()>>>>,
}

async fn ws_route(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Shared) {
    let (mut tx, mut rx) = socket.split();
    let mut events = shared.events.subscribe();
    if tx.send(Message::Text(shared.hello.to_string())).await.is_err() {
        return;
    }
    if let Some(c) = shared.connected.lock().unwrap().take() {
        let _ = c.send(());
    }
    let (direct_tx, mut direct_rx) = tokio::sync::mpsc::channel::<String>(32);
    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                ev = events.recv() => match ev {
                    Ok((end, text)) => {
                        if tx.send(Message::Text(text.to_string())).await.is_err() {
                            break;
                        }
                        if end {
                            let _ = tx.send(Message::Close(None)).await;
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::debug!(skipped = n, "client lagging, events dropped");
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                Some(text) = direct_rx.recv() => {
                    if tx.send(Message::Text(text)).await.is_err() {
                        break;
                    }
                }
            }
        }
    });
    while let Some(Ok(msg)) = rx.next().await {
        let reply = match msg {
            Message::Text(text) => match Inbound::parse(&text) {
                Ok(m) => match shared.inbound.try_send(m) {
                    Ok(()) => None,
                    Err(TrySendError::Full(_)) => Some("inbound queue full, message dropped".to_string()),
                    Err(TrySendError::Disconnected(_)) => Some("session has ended".to_string()),
                },
                Err(e) => Some(e),
            },
            Message::Binary(_) => Some("binary frames are not supported".to_string()),
            Message::Close(_) => break,
            _ => None,
        };
        if let Some(e) = reply {
            tracing::warn!(error = %e, "rejected client message");
            if direct_tx.send(Outbound::error(e).to_json()).await.is_err() {
                break;
            }
        }
    }
    drop(direct_tx);
    let _ = tokio::time::timeout(Duration::from_secs(1), writer).await;
}

/// Binds the endpoint, calls `on_bound` with the listening address, runs
/// one session and shuts down after the final summary is broadcast.
#[allow(clippy::too_many_arguments)]
pub fn serve_session(
    ens: &Ensemble,
    rec: &Recording,
    control: ControllerConfig,
    live: &LiveOptions,
    svc: &ServiceOptions,
    log: &mut dyn Write,
    commands: &mut dyn Write,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<SessionSummary> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(1)
        .enable_all()
        .build()
        .map_err(|e| HarnessError::Runtime(format!("async runtime: {e}")))?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind((svc.bind.as_str(), svc.port)))
        .map_err(|e| HarnessError::Runtime(format!("cannot listen on {}:{}: {e}", svc.bind, svc.port)))?;
    let addr = listener.local_addr().map_err(|e| HarnessError::Runtime(e.to_string()))?;

    let hello = Outbound::Hello {
        v: PROTOCOL_VERSION,
        protocol: PROTOCOL_NAME.into(),
        session: session_info(ens, live.window),
    };
    let (events, _) = broadcast::channel(svc.outbound_capacity.max(1));
    let (in_tx, in_rx): (SyncSender<Inbound>, Receiver<Inbound>) = sync_channel(svc.inbound_capacity.max(1));
    let (conn_tx, conn_rx) = std::sync::mpsc::channel();
    let shared = Shared {
        hello: Arc::new(hello.to_json()),
        events: events.clone(),
        inbound: in_tx,
        connected: Arc::new(Mutex::new(Some(conn_tx))),
    };
    let app = Router::new().route("/ws", get(ws_route)).with_state(shared);
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    tracing::info!(%addr, "service listening on ws://{addr}/ws");
    on_bound(addr);
    if svc.wait_for_client {
        conn_rx.recv().map_err(|_| HarnessError::Runtime("service stopped before a client connected".into()))?;
    }

    let mut publish = |m: Outbound| {
        let end = matches!(m, Outbound::End { .. });
        let _ = events.send((end, Arc::new(m.to_json())));
    };
    let result = run_session(
        ens,
        rec,
        control,
        live,
        Vec::new(),
        Some(in_rx),
        Sinks { log, commands, outbound: Some(&mut publish) },
    );
    if let Err(e) = &result {
        let _ = events.send((true, Arc::new(Outbound::error(format!("session failed: {e}")).to_json())));
    }
    let _ = stop_tx.send(());
    rt.block_on(async {
        let _ = tokio::time::timeout(Duration::from_secs(2), server).await;
    });
    rt.shutdown_timeout(Duration::from_secs(1));
    result
}
