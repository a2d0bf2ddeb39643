#include <doctest.h>

#include <chrono>
#include <future>
#include <thread>

#include "semlink/image_io.hpp"
#include "semlink/service.hpp"
#include "test_support.hpp"

#include <httplib.h>

using namespace semlink;
using nlohmann::json;

namespace {

std::string png64(const RgbImage& img) { return base64_encode(encode_png(img)); }

std::shared_ptr<const DnnLink> tiny_dnn() {
  const auto cfg = CodecConfig::tiny();
  return std::make_shared<DnnLink>(cfg, init_params(cfg, 3));
}

RgbImage decode64(const json& v) { return decode_png(base64_decode(v.get<std::string>())); }

}  // namespace

TEST_CASE("noiseless qam returns the processed image unchanged") {
  const DemoService svc(nullptr, "none");
  const RgbImage img = testing::synthetic_raster(32, 32, 1);
  const auto r = svc.transmit(json{{"image", png64(img)}, {"snr_db", "inf"}, {"systems", {"qam256"}}}.dump());
  REQUIRE(r.status == 200);
  CHECK(decode64(r.body["systems"]["qam256"]["reconstruction"]) == img);
  CHECK(decode64(r.body["original_processed"]) == img);
  CHECK(r.body["systems"]["qam256"]["ssim"].get<double>() == doctest::Approx(1.0));
  CHECK(r.body["systems"]["qam256"]["psnr_db"] == "inf");
  CHECK(r.body["tiles"] == 1);
  CHECK(r.body.contains("timing_ms"));
  CHECK(r.body["seed"].get<std::uint64_t>() < (std::uint64_t{1} << 53));
}

TEST_CASE("seeded requests are reproducible; unseeded ones echo a fresh seed") {
  const DemoService svc(tiny_dnn(), "abc");
  const json req{{"image", png64(testing::synthetic_raster(64, 32, 2))},
                 {"snr_db", 10},
                 {"channel", "rayleigh"},
                 {"systems", {"dnn", "qam256"}},
                 {"seed", 1234}};
  auto a = svc.transmit(req.dump()).body;
  auto b = svc.transmit(req.dump()).body;
  a.erase("timing_ms");
  b.erase("timing_ms");
  CHECK(a == b);
  CHECK(a["seed"] == 1234);
  json other = req;
  other["seed"] = 1235;
  CHECK(svc.transmit(other.dump()).body["systems"]["qam256"] != a["systems"]["qam256"]);

  json unseeded = req;
  unseeded.erase("seed");
  auto u = svc.transmit(unseeded.dump()).body;
  json replay = req;
  replay["seed"] = u["seed"];
  auto v = svc.transmit(replay.dump()).body;
  u.erase("timing_ms");
  v.erase("timing_ms");
  CHECK(u == v);
}

TEST_CASE("large uploads are resized and tiled") {
  const DemoService svc(tiny_dnn(), "abc");
  const auto r = svc.transmit(
      json{{"image", png64(testing::synthetic_raster(256, 256, 3))}, {"snr_db", 20}, {"seed", 1}}.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["tiles"] == 64);
  CHECK(r.body["systems"].size() == 2);
  for (const char* s : {"dnn", "qam256"}) {
    const RgbImage rec = decode64(r.body["systems"][s]["reconstruction"]);
    CHECK(rec.width == 256);
    CHECK(rec.height == 256);
  }
  const auto wide = svc.transmit(
      json{{"image", png64(testing::synthetic_raster(1000, 300, 3))}, {"snr_db", 20}, {"systems", {"qam256"}}}.dump());
  REQUIRE(wide.status == 200);
  CHECK(wide.body["width"] == 512);
  CHECK(wide.body["height"].get<int>() % 32 == 0);
}

TEST_CASE("request validation") {
  const DemoService svc(nullptr, "none");
  const std::string img = png64(testing::synthetic_raster(32, 32, 1));
  CHECK(svc.transmit("not json").status == 400);
  CHECK(svc.transmit(json{{"snr_db", 10}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", "@@@"}, {"snr_db", 10}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", base64_encode(std::vector<std::uint8_t>{1, 2, 3})}, {"snr_db", 10}}.dump()).status ==
        400);
  CHECK(svc.transmit(json{{"image", img}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", img}, {"snr_db", "loud"}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", img}, {"snr_db", 10}, {"channel", "rician"}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", img}, {"snr_db", 10}, {"systems", json::array()}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", img}, {"snr_db", 10}, {"systems", {"dnn"}}}.dump()).status == 400);
  CHECK(svc.transmit(json{{"image", img}, {"snr_db", 10}, {"seed", -4}}.dump()).status == 400);
  const auto big = svc.transmit(json{{"image", png64(RgbImage{4100, 8, std::vector<std::uint8_t>(4100 * 8 * 3)})},
                                     {"snr_db", 10}}
                                    .dump());
  CHECK(big.status == 413);
  CHECK(big.body["error"].get<std::string>().find("4096") != std::string::npos);
}

TEST_CASE("sweep endpoint") {
  const DemoService svc(tiny_dnn(), "abc");
  const std::string img = png64(testing::synthetic_raster(32, 32, 4));
  const auto r = svc.sweep(json{{"image", img}, {"grid", {0, 20, 40}}, {"seed", 2}}.dump());
  REQUIRE(r.status == 200);
  REQUIRE(r.body["points"].size() == 3);
  for (const auto& p : r.body["points"]) CHECK(p["ssim"].size() == 2);
  CHECK(svc.sweep(json{{"image", img}, {"grid", json::array()}}.dump()).status == 400);
  json many = json::array();
  for (int i = 0; i < 17; ++i) many.push_back(i);
  CHECK(svc.sweep(json{{"image", img}, {"grid", many}}.dump()).status == 400);
  CHECK(svc.sweep(json{{"image", img}, {"grid", {1}}, {"repeats", 0}}.dump()).status == 400);

  const auto q = svc.sweep(
      json{{"image", img}, {"grid", {0, 40}}, {"systems", {"qam256"}}, {"repeats", 8}, {"seed", 5}}.dump());
  REQUIRE(q.status == 200);
  CHECK(q.body["points"][1]["ssim"]["qam256"].get<double>() >= q.body["points"][0]["ssim"]["qam256"].get<double>());
}

TEST_CASE("info") {
  const auto dnn = tiny_dnn();
  const DemoService svc(dnn, "abc");
  const json info = svc.info();
  CHECK(info["param_count"] == param_count(CodecConfig::tiny()));
  CHECK(info["channels"] == json{"awgn", "rayleigh"});
  CHECK(info["checkpoint_id"] == "abc");
  CHECK(info["config"]["embed_dim"] == 8);
  CHECK(svc.info() == info);
  CHECK(DemoService(nullptr, "none").info()["systems"] == json{"qam256"});
}

TEST_CASE("live HTTP server with concurrent identical requests") {
  const DemoService svc(tiny_dnn(), "abc");
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  const auto info = cli.Get("/api/info");
  REQUIRE(info);
  CHECK(info->status == 200);
  CHECK(info->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto opt = cli.Options("/api/transmit");
  REQUIRE(opt);
  CHECK(opt->status == 204);

  const std::string body =
      json{{"image", png64(testing::synthetic_raster(64, 64, 6))}, {"snr_db", 5}, {"seed", 77}}.dump();
  std::vector<std::future<json>> futures;
  for (int i = 0; i < 4; ++i) {
    futures.push_back(std::async(std::launch::async, [&]() {
      httplib::Client c("127.0.0.1", port);
      const auto res = c.Post("/api/transmit", body, "application/json");
      json j = res && res->status == 200 ? json::parse(res->body) : json();
      if (j.is_object()) j.erase("timing_ms");
      return j;
    }));
  }
  const json first = futures[0].get();
  CHECK(first.is_object());
  for (std::size_t i = 1; i < futures.size(); ++i) CHECK(futures[i].get() == first);

  const auto bad = cli.Post("/api/sweep", json{{"image", "x"}, {"grid", json::array()}}.dump(), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).contains("error"));

  server.stop();
  th.join();
}
