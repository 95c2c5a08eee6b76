//! Blocking HTTP client for remote backends.

use crate::image::DecodedPng;

use super::{wire, BackendDescriptor, GenError};

/// POST a JSON body and decode the `{"image": ...}` reply.
pub(crate) fn post(backend: &BackendDescriptor, body: &str) -> Result<DecodedPng, GenError> {
    let endpoint = backend.endpoint.as_deref().ok_or(GenError::MissingEndpoint)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(backend.timeout()))
        .http_status_as_error(false)
        .build()
        .into();
    log::debug!("POST {endpoint} ({} bytes)", body.len());
    let transport = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => GenError::Timeout {
            endpoint: endpoint.to_string(),
            seconds: backend.timeout_secs,
        },
        other => GenError::Transport {
            endpoint: endpoint.to_string(),
            message: other.to_string(),
        },
    };
    let mut resp = agent
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body)
        .map_err(transport)?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().with_config().limit(1 << 30).read_to_string().map_err(transport)?;
    if status != 200 {
        let mut body = text;
        body.truncate(512);
        return Err(GenError::Status { status, body });
    }
    wire::parse_response(&text)
}

#[cfg(test)]
pub(crate) mod stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// One-shot-per-request HTTP server on a loopback port. `reply` gets the
    /// request body and returns (status, response body). Received bodies are
    /// forwarded on the returned channel.
    pub(crate) fn serve(
        requests: usize,
        reply: impl Fn(&str) -> (u16, String) + Send + 'static,
    ) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for stream in listener.incoming().take(requests) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let body = String::from_utf8(body).unwrap();
                let (status, out) = reply(&body);
                let _ = tx.send(body);
                let head = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                    out.len()
                );
                stream.write_all(head.as_bytes()).unwrap();
                stream.write_all(out.as_bytes()).unwrap();
            }
        });
        (url, rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genstage::tests::{sphere, stage1_request, stage2_request};
    use crate::genstage::{generate_views, inpaint_texture, remote_enhance_step};
    use crate::image::{Depth, Image};
    use crate::raster::BACKGROUND;

    #[test]
    fn stage1_echo_returns_constant_on_covered_pixels() {
        let mesh = sphere();
        let req = stage1_request(&mesh, 24, 5);
        let coverage = req.position_grid.coverage.clone();
        let (url, rx) = stub::serve(1, move |_| {
            let img = Image::from_fn(48, 48, |x, y| if coverage[y * 48 + x] { [0.4, 0.6, 0.8] } else { BACKGROUND });
            (200, wire::response_body(&img, None, Depth::Eight).unwrap())
        });
        let out = generate_views(&BackendDescriptor::remote(url), &req).unwrap();
        for (c, &cov) in out.color.data.iter().zip(&out.coverage) {
            if cov {
                assert!((c[0] - 0.4).abs() < 2e-3 && (c[1] - 0.6).abs() < 2e-3 && (c[2] - 0.8).abs() < 2e-3);
            } else {
                assert_eq!(*c, BACKGROUND);
            }
        }
        let sent: wire::WireRequest = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent, wire::stage1_request(&req).unwrap());
    }

    #[test]
    fn painted_background_from_remote_is_rejected() {
        let req = stage1_request(&sphere(), 16, 5);
        let (url, _rx) = stub::serve(1, |_| (200, wire::response_body(&Image::filled(32, 32, [0.5; 3]), None, Depth::Eight).unwrap()));
        let r = generate_views(&BackendDescriptor::remote(url), &req);
        assert!(matches!(r, Err(crate::genstage::GenError::PaintedBackground { .. })));
    }

    #[test]
    fn wrong_size_from_remote_is_rejected() {
        let req = stage1_request(&sphere(), 16, 5);
        let (url, _rx) = stub::serve(1, |_| (200, wire::response_body(&Image::new(8, 8), None, Depth::Eight).unwrap()));
        let r = generate_views(&BackendDescriptor::remote(url), &req);
        assert!(matches!(r, Err(GenError::WrongSize { expected: 32, .. })));
    }

    #[test]
    fn http_error_status_is_typed() {
        let req = stage1_request(&sphere(), 16, 5);
        let (url, _rx) = stub::serve(1, |_| (503, "busy".into()));
        match generate_views(&BackendDescriptor::remote(url), &req) {
            Err(GenError::Status { status, body }) => {
                assert_eq!(status, 503);
                assert_eq!(body, "busy");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_reply_is_typed() {
        let req = stage1_request(&sphere(), 16, 5);
        let (url, _rx) = stub::serve(1, |_| (200, "{\"picture\": 1}".into()));
        assert!(matches!(generate_views(&BackendDescriptor::remote(url), &req), Err(GenError::Malformed(_))));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // bind then drop to get a port nobody listens on
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let req = stage1_request(&sphere(), 16, 5);
        let r = generate_views(&BackendDescriptor::remote(format!("http://127.0.0.1:{port}/")), &req);
        assert!(matches!(r, Err(GenError::Transport { .. })));
    }

    #[test]
    fn silent_server_times_out() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let req = stage1_request(&sphere(), 16, 5);
        let backend = BackendDescriptor {
            timeout_secs: 0.3,
            ..BackendDescriptor::remote(url)
        };
        let r = generate_views(&backend, &req);
        drop(listener);
        assert!(matches!(r, Err(GenError::Timeout { .. })), "{r:?}");
    }

    #[test]
    fn stage2_restores_texels_outside_mask() {
        let req = stage2_request(16, |x, _| (x < 10).then_some([0.2, 0.3, 0.4]));
        let (url, rx) = stub::serve(1, |_| (200, wire::response_body(&Image::filled(16, 16, [0.9; 3]), None, Depth::Eight).unwrap()));
        let out = inpaint_texture(&BackendDescriptor::remote(url), &req).unwrap();
        let resolved = req.partial.resolved_image();
        for (i, &m) in req.mask.mask.iter().enumerate() {
            let want = if m { [0.9; 3] } else { resolved.data[i] };
            for k in 0..3 {
                assert!((out.color.data[i][k] - want[k]).abs() < 2e-3);
            }
        }
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["kind"], "stage2");
    }

    #[test]
    fn stage2_alpha_holes_are_unfilled() {
        let req = stage2_request(8, |x, _| (x < 4).then_some([0.2; 3]));
        let (url, _rx) = stub::serve(1, |_| {
            let flags = vec![false; 64];
            (200, wire::response_body(&Image::filled(8, 8, [0.5; 3]), Some(&flags), Depth::Eight).unwrap())
        });
        let r = inpaint_texture(&BackendDescriptor::remote(url), &req);
        assert!(matches!(r, Err(GenError::UnfilledMask { texels: 32 })));
    }

    #[test]
    fn enhance_step_round_trip() {
        let (url, rx) = stub::serve(1, |body| {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            let img = wire::decode_b64_png(v["images"]["image"].as_str().unwrap()).unwrap().image;
            (200, wire::response_body(&img, None, Depth::Sixteen).unwrap())
        });
        let patch = Image::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let out = remote_enhance_step(&BackendDescriptor::remote(url), 1, &patch, 2, 50).unwrap();
        for (a, b) in out.data.iter().zip(&patch.data) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-4);
            }
        }
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["step"], 2);
    }
}
