//! Start the service on a free port and play two exercise rounds over HTTP.

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

async fn request(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> std::io::Result<String> {
    let mut stream = TcpStream::connect(addr).await?;
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).await?;
    stream.write_all(body.as_bytes()).await?;
    let mut out = String::new();
    stream.read_to_string(&mut out).await?;
    Ok(out.split("\r\n\r\n").nth(1).unwrap_or_default().to_string())
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (listener, addr) = plives_server::bind(0).await?;
    tokio::spawn(plives_server::serve(listener, plives_server::router()));
    println!("service at http://{addr}");

    let session: serde_json::Value =
        serde_json::from_str(&request(addr, "POST", "/sessions", r#"{"seed": 3}"#).await?)?;
    let id = session["id"].as_str().unwrap_or_default().to_string();
    for (a, b) in [(1, 1), (1, 2)] {
        let body = format!(r#"{{"setting_a": {a}, "setting_b": {b}}}"#);
        let round: serde_json::Value =
            serde_json::from_str(&request(addr, "POST", &format!("/sessions/{id}/rounds"), &body).await?)?;
        println!(
            "round ({a}, {b}): same {}, different {}, pair counts {}",
            round["same"], round["different"], round["pair_counts"]
        );
    }
    println!("{}", request(addr, "GET", &format!("/sessions/{id}/summary"), "").await?);
    Ok(())
}
