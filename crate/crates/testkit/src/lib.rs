//! Local HTTP doubles for tests: a small site server and a scriptable save
//! endpoint, both on 127.0.0.1 with an ephemeral port.

use std::collections::{HashMap, VecDeque};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

pub mod site;

use site::{NodeKind, SiteNode};

/// Placeholder replaced by the server's base URL in page bodies.
pub const BASE: &str = "{{base}}";

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn status(status: u16) -> Self {
        Self {
            status,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn html(body: impl Into<String>) -> Self {
        Self::status(200)
            .header("Content-Type", "text/html; charset=utf-8")
            .body(body.into().into_bytes())
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn body(mut self, body: Vec<u8>) -> Self {
        self.body = body;
        self
    }
}

#[derive(Default)]
struct State {
    routes: HashMap<String, Reply>,
    save_script: VecDeque<Reply>,
    log: Vec<String>,
}

/// A tiny site. Routes are keyed by the raw request target (path plus query).
/// Targets under `/save/` go to the save script; once the script runs out
/// they get a 200 with a `Content-Location` pointing at a fake snapshot.
pub struct FixtureServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start() -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind fixture server"));
        let addr = server.server_addr().to_ip().expect("tcp listener");
        let state = Arc::new(Mutex::new(State::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let (server, state, stop) = (server.clone(), state.clone(), stop.clone());
            let base = format!("http://{addr}");
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let target = req.url().to_string();
                    let reply = {
                        let mut st = state.lock().unwrap();
                        st.log.push(target.clone());
                        if target.starts_with("/save/") {
                            st.save_script.pop_front().unwrap_or_else(|| {
                                Reply::status(200)
                                    .header("Content-Location", &format!("/web/20260101000000/{}", &target[6..]))
                            })
                        } else {
                            st.routes.get(&target).cloned().unwrap_or_else(|| Reply::status(404))
                        }
                    };
                    let body = String::from_utf8(reply.body.clone())
                        .map(|s| s.replace(BASE, &base).into_bytes())
                        .unwrap_or(reply.body);
                    let mut resp = Response::from_data(body).with_status_code(reply.status);
                    for (k, v) in &reply.headers {
                        let v = v.replace(BASE, &base);
                        resp.add_header(Header::from_bytes(k.as_bytes(), v.as_bytes()).expect("valid header"));
                    }
                    let _ = req.respond(resp);
                }
            })
        };
        Self {
            addr,
            state,
            server,
            stop,
            worker: Some(worker),
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port>`
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, target: &str) -> String {
        format!("{}{}", self.base_url(), target)
    }

    pub fn route(&self, target: &str, reply: Reply) -> &Self {
        self.state.lock().unwrap().routes.insert(target.into(), reply);
        self
    }

    /// An HTML page. `{{base}}` in the body becomes the base URL.
    pub fn page(&self, target: &str, html: &str) -> &Self {
        self.route(target, Reply::html(html))
    }

    pub fn redirect(&self, target: &str, location: &str) -> &Self {
        self.route(target, Reply::status(301).header("Location", location))
    }

    /// Serves every on-site node of `nodes`: pages as rendered HTML, the
    /// rest as opaque bytes.
    pub fn serve_site(&self, nodes: &[SiteNode]) -> &Self {
        for node in nodes {
            match node.kind {
                NodeKind::Page => {
                    self.page(node.target, &site::render(node));
                }
                NodeKind::Media | NodeKind::Asset => {
                    self.route(node.target, Reply::status(200).body(b"\x89binary\x00".to_vec()));
                }
                NodeKind::External => {}
            }
        }
        self
    }

    /// Queues replies for the next requests under `/save/`.
    pub fn script_saves(&self, replies: impl IntoIterator<Item = Reply>) -> &Self {
        self.state.lock().unwrap().save_script.extend(replies);
        self
    }

    /// Raw request targets in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn save_requests(&self) -> Vec<String> {
        self.requests().into_iter().filter(|t| t.starts_with("/save/")).collect()
    }

    pub fn clear_log(&self) {
        self.state.lock().unwrap().log.clear();
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// An address nothing listens on, for connection-refused cases.
pub fn unreachable_addr() -> SocketAddr {
    let l = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = l.local_addr().expect("addr");
    drop(l);
    addr
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpStream;

    fn get(addr: SocketAddr, target: &str) -> String {
        let mut s = TcpStream::connect(addr).unwrap();
        write!(s, "GET {target} HTTP/1.0\r\nHost: x\r\n\r\n").unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).unwrap();
        out
    }

    #[test]
    fn serves_routes_and_logs_raw_targets() {
        let srv = FixtureServer::start();
        srv.page("/a?x=1", "<a href=\"{{base}}/b\">b</a>");
        let resp = get(srv.addr(), "/a?x=1");
        assert!(resp.starts_with("HTTP/1.0 200") || resp.starts_with("HTTP/1.1 200"));
        assert!(resp.contains(&format!("{}/b", srv.base_url())));
        assert!(get(srv.addr(), "/missing").contains(" 404"));
        get(srv.addr(), "/save/https://example.org/a%20b?q=1");
        assert_eq!(
            srv.requests(),
            vec!["/a?x=1", "/missing", "/save/https://example.org/a%20b?q=1"]
        );
    }

    #[test]
    fn save_script_then_default() {
        let srv = FixtureServer::start();
        srv.script_saves([Reply::status(429).header("Retry-After", "7")]);
        assert!(get(srv.addr(), "/save/x").contains(" 429"));
        assert!(get(srv.addr(), "/save/x").contains(" 200"));
    }
}
