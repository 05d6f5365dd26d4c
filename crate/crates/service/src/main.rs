use vecalc_service::{router, ServiceConfig};

#[tokio::main]
async fn main() {
    let config = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vecalc-server: {e}");
            std::process::exit(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(&config.bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("vecalc-server: cannot bind {}: {e}", config.bind);
            std::process::exit(1);
        }
    };
    eprintln!("vecalc-server listening on {}", config.bind);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(config)).with_graceful_shutdown(shutdown).await {
        eprintln!("vecalc-server: {e}");
        std::process::exit(1);
    }
}
