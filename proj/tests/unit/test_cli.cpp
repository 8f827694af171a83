// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Workdir {
 public:
  explicit Workdir(const std::string& name) : dir_(fs::temp_directory_path() / ("qdrec_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workdir() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& s) const { return dir_ / s; }

  Run run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " \"" QDREC_CLI_PATH "\" " + args + " >\"" +
                            (dir_ / "stdout").string() + "\" 2>\"" + (dir_ / "stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir_ / "stdout");
    r.err = slurp(dir_ / "stderr");
    return r;
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
  }

 private:
  fs::path dir_;
};

const std::string kFixtures = QDREC_FIXTURE_DIR;
const std::string kTrainIni =
    "[train]\nepochs = 2\nbatch_size = 8\nlr = 0.003\nseed = 5\neval_every = 1\n"
    "[model]\nd = 8\nlayers = 1\nctx_dim = 2\ngate_hidden = 4\nmax_dist = 8\n"
    "[sampler]\nc = 5\n";

}  // namespace

TEST_CASE("gen is deterministic and honors seed precedence") {
  Workdir w("gen");
  const std::string cfg = "--config \"" + kFixtures + "/small_corpus.ini\"";
  REQUIRE(w.run("gen " + cfg + " --out \"" + (w / "a").string() + "\"").code == 0);
  REQUIRE(w.run("gen " + cfg + " --out \"" + (w / "b").string() + "\"").code == 0);
  CHECK(slurp(w / "a/interactions.tsv") == slurp(w / "b/interactions.tsv"));
  CHECK(slurp(w / "a/catalog.tsv") == slurp(w / "b/catalog.tsv"));
  CHECK(!slurp(w / "a/interactions.tsv").empty());

  REQUIRE(w.run("gen " + cfg + " --seed 8 --out \"" + (w / "c").string() + "\"").code == 0);
  CHECK(slurp(w / "a/interactions.tsv") != slurp(w / "c/interactions.tsv"));
  // The config seed wins over the environment.
  REQUIRE(w.run("gen " + cfg + " --out \"" + (w / "d").string() + "\"", "QDREC_SEED=99").code == 0);
  CHECK(slurp(w / "a/interactions.tsv") == slurp(w / "d/interactions.tsv"));
  CHECK(w.run("gen --out \"" + (w / "e").string() + "\"", "QDREC_SEED=abc").code == 1);
}

TEST_CASE("missing inputs and bad values map to exit codes") {
  Workdir w("errors");
  const Run missing = w.run("train --corpus \"" + (w / "nope").string() + "\" --out \"" +
                            (w / "m.ckpt").string() + "\"");
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);
  CHECK(w.run("eval --corpus x").code != 0);
  CHECK(w.run("bench --n 3x").code == 1);
  CHECK(w.run("frobnicate").code == 1);
  w.write("bad.ini", "[gen]\nn_users = 4\nbogus = 1\n");
  const Run unknown = w.run("gen --config \"" + (w / "bad.ini").string() + "\" --out \"" +
                            (w / "g").string() + "\"");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("bogus") != std::string::npos);
}

TEST_CASE("bench with an empty grid prints only the header") {
  Workdir w("bench");
  const Run r = w.run("bench --n \"\"");
  CHECK(r.code == 0);
  CHECK(r.out == "path,N,J,cprime,d,h,macs,wall_ns,below_threshold\n");
  const Run one = w.run("bench --n 16 --j 2 --cprime 3 --d 8 --layers 1");
  CHECK(one.code == 0);
  std::istringstream lines(one.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) rows += !line.empty();
  CHECK(rows == 4);
  CHECK(one.out.find("\nnaive,16,2,3,8,1,") != std::string::npos);
}

TEST_CASE("maskcheck against the worked example fixture") {
  Workdir w("mask");
  const Run ok = w.run("maskcheck --fixture \"" + kFixtures + "/worked_example_mask.txt\"");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("fixture matches") != std::string::npos);

  std::string text = slurp(fs::path(kFixtures) / "worked_example_mask.txt");
  const std::size_t cell = text.find('\n') + 1 + 2;  // row 1, col 2
  text[cell] = '1';
  w.write("bad_mask.txt", text);
  const Run bad = w.run("maskcheck --fixture \"" + (w / "bad_mask.txt").string() + "\"");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("row 1 col 2") != std::string::npos);
  CHECK(w.run("maskcheck --fixture \"" + (w / "none.txt").string() + "\"").code == 2);
}

TEST_CASE("maskcheck prints the masks of a corpus sequence") {
  Workdir w("maskcorpus");
  REQUIRE(w.run("gen --config \"" + kFixtures + "/small_corpus.ini\" --out \"" + (w / "c").string() + "\"").code == 0);
  const Run r = w.run("maskcheck --corpus \"" + (w / "c").string() + "\" --user 0 --index 0");
  CHECK(r.code == 0);
  for (const char* section : {"# tokens", "# causal", "# session", "# invalidq", "# combined"})
    CHECK(r.out.find(section) != std::string::npos);
  CHECK(w.run("maskcheck --corpus \"" + (w / "c").string() + "\" --user 0 --index 100000").code == 1);
}

TEST_CASE("train, resume and eval end to end") {
  Workdir w("train");
  REQUIRE(w.run("gen --config \"" + kFixtures + "/small_corpus.ini\" --out \"" + (w / "c").string() + "\"").code == 0);
  w.write("train.ini", kTrainIni);
  const std::string base = "train --corpus \"" + (w / "c").string() + "\" --config \"" +
                           (w / "train.ini").string() + "\" ";
  REQUIRE(w.run(base + "--out \"" + (w / "full.ckpt").string() + "\" --epochs 3").code == 0);
  REQUIRE(w.run(base + "--out \"" + (w / "part.ckpt").string() + "\" --epochs 2").code == 0);
  const Run resumed = w.run(base + "--out \"" + (w / "part.ckpt").string() + "\" --epochs 3 --resume \"" +
                            (w / "part.ckpt").string() + "\"");
  REQUIRE(resumed.code == 0);
  CHECK(resumed.out.find("epochs 1") != std::string::npos);
  CHECK(slurp(w / "full.ckpt") == slurp(w / "part.ckpt"));
  CHECK(slurp(w / "full.ckpt.csv") == slurp(w / "part.ckpt.csv"));
  CHECK(slurp(w / "full.ckpt.csv").rfind("epoch,split,loss,hr1,hr5,hr10,ndcg5,ndcg10\n0,train,", 0) == 0);

  const Run ev = w.run("eval --corpus \"" + (w / "c").string() + "\" --config \"" + (w / "train.ini").string() +
                       "\" --checkpoint \"" + (w / "full.ckpt").string() + "\" --out \"" +
                       (w / "metrics.csv").string() + "\"");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("3,test:sampled,") != std::string::npos);
  CHECK(ev.out.find("3,test:aligned,") != std::string::npos);
  CHECK(slurp(w / "metrics.csv") == ev.out);
  const Run pop = w.run("eval --corpus \"" + (w / "c").string() + "\" --popularity --protocol sampled");
  REQUIRE(pop.code == 0);
  CHECK(pop.out.find("0,test:popularity:sampled,") != std::string::npos);
  CHECK(pop.out.find("aligned") == std::string::npos);
  CHECK(w.run("eval --corpus \"" + (w / "c").string() + "\"").code == 1);
}

TEST_CASE("ablation flags change training") {
  Workdir w("ablation");
  REQUIRE(w.run("gen --config \"" + kFixtures + "/small_corpus.ini\" --out \"" + (w / "c").string() + "\"").code == 0);
  w.write("base.ini", kTrainIni);
  w.write("abl.ini", kTrainIni + "[ablation]\nno_dsfnet = true\nno_relative_bias = true\n");
  const std::string corpus = "train --corpus \"" + (w / "c").string() + "\" --epochs 1 ";
  REQUIRE(w.run(corpus + "--config \"" + (w / "base.ini").string() + "\" --out \"" + (w / "a.ckpt").string() + "\"").code == 0);
  REQUIRE(w.run(corpus + "--config \"" + (w / "abl.ini").string() + "\" --out \"" + (w / "b.ckpt").string() + "\"").code == 0);
  CHECK(slurp(w / "a.ckpt.csv") != slurp(w / "b.ckpt.csv"));
  w.write("typo.ini", kTrainIni + "[ablation]\nno_dsfnett = true\n");
  CHECK(w.run(corpus + "--config \"" + (w / "typo.ini").string() + "\" --out \"" + (w / "t.ckpt").string() + "\"").code == 1);
}

TEST_CASE("sampler-audit finds no violations") {
  Workdir w("audit");
  REQUIRE(w.run("gen --config \"" + kFixtures + "/small_corpus.ini\" --out \"" + (w / "c").string() + "\"").code == 0);
  const Run r = w.run("sampler-audit --corpus \"" + (w / "c").string() + "\" --draws 20000");
  CHECK(r.code == 0);
  CHECK(r.out.find("violations 0") != std::string::npos);
  CHECK(r.out.find("draws 20000") != std::string::npos);
}
