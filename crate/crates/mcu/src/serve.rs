//! Real-socket front end. Reader threads feed one event loop that owns the
//! MCU; the loop sleeps until the next datagram, line or MCU deadline.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use mcu_core::conference::{ConferenceConfig, Mcu, McuConfig, McuEvent, Mode};

use crate::signaling::{ConnId, SignalingServer};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub media_port: u16,
    pub public_ip: Ipv4Addr,
    pub mode: Mode,
    pub record_dir: PathBuf,
    pub seed: u64,
}

enum Input {
    Open(ConnId, TcpStream),
    Line(ConnId, String),
    Closed(ConnId),
    Datagram(SocketAddrV4, Vec<u8>),
}

fn accept_loop(listener: TcpListener, tx: Sender<Input>) {
    let mut next: ConnId = 0;
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let conn = next;
        next += 1;
        let Ok(writer) = stream.try_clone() else {
            continue;
        };
        if tx.send(Input::Open(conn, writer)).is_err() {
            return;
        }
        let tx = tx.clone();
        thread::spawn(move || {
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else {
                    break;
                };
                if tx.send(Input::Line(conn, line)).is_err() {
                    return;
                }
            }
            let _ = tx.send(Input::Closed(conn));
        });
    }
}

fn udp_loop(socket: UdpSocket, tx: Sender<Input>) {
    let mut buf = vec![0u8; 65536];
    loop {
        match socket.recv_from(&mut buf) {
            Ok((n, SocketAddr::V4(src))) => {
                if tx.send(Input::Datagram(src, buf[..n].to_vec())).is_err() {
                    return;
                }
            }
            Ok((_, src)) => log::debug!("ignoring IPv6 datagram from {src}"),
            Err(e) => log::warn!("udp receive failed: {e}"),
        }
    }
}

/// Video frames leave as bursts of dozens of datagrams; default receive
/// buffers overflow on them.
pub const SOCKET_BUFFER: usize = 4 << 20;

/// A UDP socket with enlarged kernel buffers.
pub fn media_socket(addr: SocketAddrV4) -> io::Result<UdpSocket> {
    let socket = socket2::Socket::new(
        socket2::Domain::IPV4,
        socket2::Type::DGRAM,
        Some(socket2::Protocol::UDP),
    )?;
    for (what, r) in [
        ("receive", socket.set_recv_buffer_size(SOCKET_BUFFER)),
        ("send", socket.set_send_buffer_size(SOCKET_BUFFER)),
    ] {
        if let Err(e) = r {
            log::warn!("cannot enlarge the {what} buffer: {e}");
        }
    }
    socket.bind(&SocketAddr::V4(addr).into())?;
    Ok(socket.into())
}

struct Loop {
    server: SignalingServer,
    socket: UdpSocket,
    conns: BTreeMap<ConnId, TcpStream>,
    start: Instant,
}

impl Loop {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn handle(&mut self, input: Input) {
        let now = self.now();
        match input {
            Input::Open(conn, stream) => {
                log::info!(
                    "signaling connection {conn} from {:?}",
                    stream.peer_addr().ok()
                );
                self.conns.insert(conn, stream);
            }
            Input::Line(conn, line) => {
                let outcome = self.server.handle_line(conn, &line, now);
                for (to, reply) in outcome.replies {
                    self.write_line(to, &reply.to_line());
                }
                if outcome.close {
                    if let Some(s) = self.conns.remove(&conn) {
                        let _ = s.shutdown(std::net::Shutdown::Both);
                    }
                }
            }
            Input::Closed(conn) => {
                self.server.disconnect(conn);
                self.conns.remove(&conn);
            }
            Input::Datagram(src, data) => self.server.mcu_mut().handle_datagram(src, &data, now),
        }
    }

    fn write_line(&mut self, conn: ConnId, line: &str) {
        let Some(stream) = self.conns.get_mut(&conn) else {
            return;
        };
        let mut buf = line.as_bytes().to_vec();
        buf.push(b'\n');
        if let Err(e) = stream.write_all(&buf) {
            log::warn!("signaling connection {conn}: {e}");
            self.conns.remove(&conn);
            self.server.disconnect(conn);
        }
    }

    fn flush(&mut self) {
        let now = self.now();
        self.server.mcu_mut().poll(now);
        for t in self.server.mcu_mut().drain_transmits() {
            if let Err(e) = self.socket.send_to(&t.payload, t.dst) {
                log::debug!("send to {} failed: {e}", t.dst);
            }
        }
        for event in self.server.pump_events() {
            match event {
                McuEvent::ProfileChanged { room, switch } => log::info!(
                    "{room}/{}: profile {} -> {}",
                    switch.participant,
                    switch.change.from.name(),
                    switch.change.to.name()
                ),
                McuEvent::LossDeclared { room, loss, .. } => {
                    log::debug!(
                        "{room}/{}: lost {:#010x}/{}",
                        loss.participant,
                        loss.ssrc,
                        loss.seq
                    )
                }
                McuEvent::Record { .. } => {}
            }
        }
    }

    fn run(mut self, rx: Receiver<Input>) -> io::Result<()> {
        loop {
            self.flush();
            let wait = self.server.mcu().next_timeout().saturating_sub(self.now());
            match rx.recv_timeout(wait) {
                Ok(input) => {
                    self.handle(input);
                    while let Ok(more) = rx.try_recv() {
                        self.handle(more);
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Ok(()),
            }
        }
    }
}

/// Both sockets bound, not yet serving.
pub struct Server {
    listener: TcpListener,
    socket: UdpSocket,
    mcu: Mcu,
    record_dir: PathBuf,
}

impl Server {
    pub fn bind(cfg: ServeConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(cfg.listen)?;
        let udp_ip = match cfg.listen.ip() {
            IpAddr::V4(ip) => ip,
            IpAddr::V6(_) => Ipv4Addr::UNSPECIFIED,
        };
        let socket = media_socket(SocketAddrV4::new(udp_ip, cfg.media_port))?;
        let media_port = socket.local_addr()?.port();
        let mcu = Mcu::new(McuConfig {
            local_addr: SocketAddrV4::new(cfg.public_ip, media_port),
            seed: cfg.seed,
            default_mode: cfg.mode,
            conference: ConferenceConfig::default(),
        });
        Ok(Self {
            listener,
            socket,
            mcu,
            record_dir: cfg.record_dir,
        })
    }

    pub fn signaling_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn media_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Serves until the process exits.
    pub fn run(self) -> io::Result<()> {
        log::info!(
            "signaling on {}, media on {}",
            self.signaling_addr()?,
            self.media_addr()?
        );
        let (tx, rx) = mpsc::channel();
        let recv_socket = self.socket.try_clone()?;
        let udp_tx = tx.clone();
        thread::spawn(move || udp_loop(recv_socket, udp_tx));
        let listener = self.listener;
        thread::spawn(move || accept_loop(listener, tx));
        Loop {
            server: SignalingServer::new(self.mcu, self.record_dir),
            socket: self.socket,
            conns: BTreeMap::new(),
            start: Instant::now(),
        }
        .run(rx)
    }
}

pub fn serve(cfg: ServeConfig) -> io::Result<()> {
    Server::bind(cfg)?.run()
}
