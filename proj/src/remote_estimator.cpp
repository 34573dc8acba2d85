// SPDX-License-Identifier: Apache-2.0
#include <boost/asio.hpp>
#include <optional>

#include "covis/estimator.hpp"

namespace covis {

namespace asio = boost::asio;
using asio::ip::tcp;

PoseEstimate remote_estimate(const Endpoint &endpoint, std::span<const std::uint8_t> emb_i,
                             std::span<const std::uint8_t> emb_j, NodeId src, NodeId dst) {
  using Kind = RemoteEstimateError::Kind;
  asio::io_context io;
  tcp::socket socket(io);
  const auto request = encode_estimate_request(emb_i, emb_j);
  std::vector<std::uint8_t> response(kEstimateResponseBytes);

  std::optional<boost::system::error_code> connect_ec;
  std::optional<boost::system::error_code> read_ec;
  std::size_t received = 0;

  boost::system::error_code resolve_ec;
  const auto addr = asio::ip::make_address(endpoint.host, resolve_ec);
  if (resolve_ec) throw RemoteEstimateError(Kind::Connect, "bad host: " + endpoint.host);

  socket.async_connect(tcp::endpoint(addr, endpoint.port), [&](boost::system::error_code ec) {
    connect_ec = ec;
    if (ec) return;
    asio::async_write(socket, asio::buffer(request),
                      [&](boost::system::error_code wec, std::size_t) {
                        if (wec) {
                          read_ec = wec;
                          return;
                        }
                        asio::async_read(socket, asio::buffer(response),
                                         [&](boost::system::error_code rec, std::size_t n) {
                                           read_ec = rec;
                                           received = n;
                                         });
                      });
  });

  io.run_for(endpoint.timeout);
  if (!read_ec) {
    if (connect_ec && *connect_ec) {
      throw RemoteEstimateError(Kind::Connect, "connect failed: " + connect_ec->message());
    }
    throw RemoteEstimateError(Kind::Timeout, "remote estimator timed out");
  }
  if (*read_ec && *read_ec != asio::error::eof) {
    throw RemoteEstimateError(Kind::Connect, "i/o error: " + read_ec->message());
  }
  response.resize(received);
  return decode_estimate_response(response, src, dst);
}

}  // namespace covis
