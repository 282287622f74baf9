#include <gtest/gtest.h>

#include <httplib.h>

#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include "support.hpp"
#include "valuelens/cli.hpp"

using namespace valuelens;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string sample(const std::string& name) { return (vltest::samples_dir() / name).string(); }

std::string trim_nl(std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

// Output stream that can be read while another thread writes to it.
class SharedBuf : public std::streambuf {
public:
    std::string text() {
        std::lock_guard lock(mu_);
        return text_;
    }

protected:
    int overflow(int c) override {
        if (c == EOF) return 0;
        std::lock_guard lock(mu_);
        text_.push_back(static_cast<char>(c));
        return c;
    }
    std::streamsize xsputn(const char* s, std::streamsize n) override {
        std::lock_guard lock(mu_);
        text_.append(s, static_cast<std::size_t>(n));
        return n;
    }

private:
    std::mutex mu_;
    std::string text_;
};

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    auto help = cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("evaluate"), std::string::npos);

    auto none = cli({});
    EXPECT_EQ(none.code, 2);
    EXPECT_EQ(none.err.rfind("error: usage:", 0), 0u);

    auto unknown = cli({"frobnicate"});
    EXPECT_EQ(unknown.code, 2);

    auto missing = cli({"evaluate"});
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.err.find("--config"), std::string::npos);
}

TEST(Cli, RuntimeErrorIsOneLine) {
    vltest::TempDir dir;
    auto r = cli({"--data-dir", dir.path().string(), "evaluate", "--config", (dir / "absent.json").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, EvolveEvaluateExportAudit) {
    vltest::TempDir dir;
    auto data = dir.path().string();
    auto evolve = cli({"--data-dir", data, "evolve", "--config", sample("evolve-mft.json")});
    ASSERT_EQ(evolve.code, 0) << evolve.err;
    auto pool_id = trim_nl(evolve.out);
    EXPECT_EQ(pool_id.rfind("pool-", 0), 0u);
    EXPECT_EQ(std::count(evolve.out.begin(), evolve.out.end(), '\n'), 1);

    auto evolve2 = cli({"--data-dir", data, "evolve", "--config", sample("evolve-schwartz.json")});
    ASSERT_EQ(evolve2.code, 0) << evolve2.err;

    auto eval = cli({"--data-dir", data, "evaluate", "--config", sample("run.json")});
    ASSERT_EQ(eval.code, 0) << eval.err;
    auto run_id = trim_nl(eval.out);
    EXPECT_EQ(run_id.rfind("run-", 0), 0u);

    auto exp = cli({"--data-dir", data, "export", "--run", run_id, "--out", (dir / "out").string()});
    ASSERT_EQ(exp.code, 0) << exp.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "leaderboard-mft.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "leaderboard-schwartz.csv"));

    auto ingest = cli({"--data-dir", data, "culture", "ingest", "--file", sample("cultures.csv")});
    ASSERT_EQ(ingest.code, 0) << ingest.err;
    EXPECT_EQ(ingest.out, "6 culture profiles stored\n");
    auto corr = cli({"--data-dir", data, "culture", "correlate", "--method", "spearman"});
    ASSERT_EQ(corr.code, 0) << corr.err;
    EXPECT_EQ(json::parse(corr.out)["method"], "spearman");
    auto proj = cli({"--data-dir", data, "culture", "project"});
    ASSERT_EQ(proj.code, 0) << proj.err;
    EXPECT_EQ(json::parse(proj.out)["entities"].size(), 9u);

    auto aud = cli({"--data-dir", data, "audit"});
    EXPECT_EQ(aud.code, 0) << aud.out << aud.err;
    EXPECT_NE(aud.out.find(" 0 discrepancies"), std::string::npos);

    auto pinned = cli({"--data-dir", data, "evaluate", "--config", sample("run.json"), "--pool", "mft=" + pool_id});
    EXPECT_EQ(pinned.code, 0) << pinned.err;
    auto bad_pool = cli({"--data-dir", data, "evaluate", "--config", sample("run.json"), "--pool", "mft"});
    EXPECT_EQ(bad_pool.code, 1);
}

TEST(Cli, IngestRejectsMalformedFile) {
    vltest::TempDir dir;
    std::ofstream(dir / "bad.csv") << "culture_id,label\nx,y\n";
    auto r = cli({"--data-dir", dir.path().string(), "culture", "ingest", "--file", (dir / "bad.csv").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: parse:", 0), 0u);
    EXPECT_FALSE(std::filesystem::exists(dir / "culture" / "profiles.csv"));
}

TEST(Cli, ServeMissingDataDir) {
    vltest::TempDir dir;
    auto r = cli({"--data-dir", (dir / "nope").string(), "serve", "--addr", "127.0.0.1:0"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("does not exist"), std::string::npos);
}

TEST(Cli, ServeOnEphemeralPortAndStopOnSignal) {
    vltest::TempDir dir;
    SharedBuf out_buf;
    std::ostream out(&out_buf);
    std::ostringstream err;
    int code = -1;
    std::thread t([&] { code = run_cli({"--data-dir", dir.path().string(), "serve", "--addr", ":0"}, out, err); });

    std::string line;
    for (int i = 0; i < 500 && line.empty(); ++i) {
        auto text = out_buf.text();
        if (auto nl = text.find('\n'); nl != std::string::npos) line = text.substr(0, nl);
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ASSERT_EQ(line.rfind("listening on http://127.0.0.1:", 0), 0u) << line;
    int port = std::stoi(line.substr(line.rfind(':') + 1));
    EXPECT_GT(port, 0);

    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/api/v1/systems");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);

    std::raise(SIGINT);
    t.join();
    EXPECT_EQ(code, 0) << err.str();
}
