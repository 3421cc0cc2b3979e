#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use sipmatch_gateway::{GatewayConfig, Inbound, Outbound, Server};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub struct Running {
    pub addr: SocketAddr,
    pub store: tempfile::TempDir,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.take().unwrap().await.unwrap();
    }
}

pub async fn start() -> Running {
    let store = tempfile::tempdir().unwrap();
    let mut config = GatewayConfig::new(store.path());
    config.tick_ms = 20;
    config.input_delay_ms = 100;
    let server = Server::bind(config, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = server.local_addr().unwrap();
    let (stop, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        server
            .run_until(async {
                let _ = rx.await;
            })
            .await
            .unwrap();
    });
    Running {
        addr,
        store,
        stop: Some(stop),
        task: Some(task),
    }
}

pub async fn create(run: &Running, body: serde_json::Value) -> serde_json::Value {
    let resp = reqwest::Client::new()
        .post(run.url("/sessions"))
        .json(&body)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    resp.json().await.unwrap()
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Client {
    pub async fn connect(run: &Running, id: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/sessions/{id}/ws", run.addr))
            .await
            .unwrap();
        Self { ws }
    }

    pub async fn recv(&mut self) -> Option<Outbound> {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(5), self.ws.next())
                .await
                .expect("server went quiet")?
                .ok()?;
            match msg {
                Message::Text(text) => return Some(serde_json::from_str(text.as_str()).unwrap()),
                Message::Close(_) => return None,
                _ => continue,
            }
        }
    }

    pub async fn send(&mut self, msg: &Inbound) {
        let text = serde_json::to_string(msg).unwrap();
        self.ws.send(Message::Text(text.into())).await.unwrap();
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string().into())).await.unwrap();
    }
}
