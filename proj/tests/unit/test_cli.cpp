#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <dynpred/serialize.hpp>

namespace fs = std::filesystem;
using dynpred::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dynpred_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + DYNPRED_CLI + "\" " + args + " >" + (kRoot / "stdout.txt").string() +
                          " 2>" + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = kRoot / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

fs::path write_config(const std::string& name, const json& doc) { return write_file(name, doc.dump(2)); }

json small_config(const std::string& out) {
  return json{{"t_lm", 4},
              {"t_hor", 3},
              {"seed", 3},
              {"output_dir", out},
              {"simulation", {{"n_subjects", 80}}},
              {"markers", "simulation"},
              {"methods", {{{"name", "coxnet-lasso"}, {"n_lambda", 20}, {"n_folds", 3}}}},
              {"cv", {{"outer_folds", 2}}}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(slurp(kRoot / "stdout.txt").find("simulate"), std::string::npos);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("cv --config /nonexistent/config.json"), 2);
}

TEST_F(Cli, SimulateIsReproducible) {
  const auto a = write_config("sim_a.json", small_config((kRoot / "sim_a").string()));
  const auto b = write_config("sim_b.json", small_config((kRoot / "sim_b").string()));
  ASSERT_EQ(run("simulate -c " + a.string()), 0) << slurp(kRoot / "stderr.txt");
  ASSERT_EQ(run("simulate -c " + b.string()), 0);
  for (const char* f : {"survival.csv", "longitudinal.csv", "truth.csv"}) {
    const auto x = slurp(kRoot / "sim_a" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(kRoot / "sim_b" / f)) << f;
  }
  const json ma = json::parse(slurp(kRoot / "sim_a" / "manifest.json"));
  const json mb = json::parse(slurp(kRoot / "sim_b" / "manifest.json"));
  EXPECT_EQ(ma.at("config_hash"), mb.at("config_hash"));
  EXPECT_EQ(ma.at("command"), "simulate");
  EXPECT_TRUE(ma.at("scenario").at("reconstructed_defaults").get<bool>());

  ASSERT_EQ(run("simulate -c " + a.string() + " --seed 4 -o " + (kRoot / "sim_c").string()), 0);
  EXPECT_NE(slurp(kRoot / "sim_a" / "survival.csv"), slurp(kRoot / "sim_c" / "survival.csv"));
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  auto doc = small_config((kRoot / "bad").string());
  doc["simulation"]["link"] = "quadratic";
  EXPECT_EQ(run("simulate -c " + write_config("bad_link.json", doc).string()), 2);
  EXPECT_NE(slurp(kRoot / "stderr.txt").find("quadratic"), std::string::npos);

  doc = small_config((kRoot / "bad").string());
  doc["methods"] = {"cox-ridge"};
  EXPECT_EQ(run("cv -c " + write_config("bad_method.json", doc).string()), 2);

  doc = small_config((kRoot / "bad").string());
  doc["unexpected"] = 1;
  EXPECT_EQ(run("cv -c " + write_config("bad_key.json", doc).string()), 2);

  EXPECT_EQ(run("cv -c " + write_file("bad_json.json", "{ not json").string()), 2);
  doc = small_config((kRoot / "bad").string());
  doc.erase("simulation");
  doc.erase("markers");
  EXPECT_EQ(run("simulate -c " + write_config("no_sim.json", doc).string()), 2);
}

TEST_F(Cli, DataErrorsExitThree) {
  auto doc = small_config((kRoot / "data_err").string());
  doc.erase("simulation");
  doc.erase("markers");
  doc["survival"] = write_file("surv_bad.csv", "id,time,event\na,1.0,2\n").string();
  doc["longitudinal"] = write_file("long_ok.csv", "id,marker,time,value\na,y1,0.5,1.0\n").string();
  EXPECT_EQ(run("cv -c " + write_config("data_err.json", doc).string()), 3);
  EXPECT_NE(slurp(kRoot / "stderr.txt").find("line 2"), std::string::npos);
}

TEST_F(Cli, CvFitPredictEvaluate) {
  const fs::path out = kRoot / "flow";
  const auto cfg = write_config("flow.json", small_config(out.string()));
  ASSERT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "flow_data").string()), 0);
  ASSERT_EQ(run("cv -c " + cfg.string()), 0) << slurp(kRoot / "stderr.txt");

  const json metrics = json::parse(slurp(out / "metrics.json"));
  EXPECT_EQ(metrics.at("t_lm"), 4);
  const auto& brier = metrics.at("methods").at("coxnet-lasso").at("brier");
  EXPECT_EQ(brier.at("values").size(), 1u);
  EXPECT_TRUE(brier.at("sd").is_null());
  EXPECT_TRUE(metrics.at("methods").at("coxnet-lasso").contains("msep"));
  const std::string preds = slurp(out / "predictions.csv");
  EXPECT_EQ(preds.rfind("subject,fold,method,prediction\n", 0), 0u);

  // The cv predictions scored by evaluate reproduce the cv Brier score.
  const fs::path eval = kRoot / "eval.json";
  ASSERT_EQ(run("evaluate -p " + (out / "predictions.csv").string() + " -s " +
                (kRoot / "flow_data" / "survival.csv").string() + " --t-lm 4 --t-hor 3 --truth " +
                (kRoot / "flow_data" / "truth.csv").string() + " -o " + eval.string()),
            0)
      << slurp(kRoot / "stderr.txt");
  const json ev = json::parse(slurp(eval));
  EXPECT_NEAR(ev.at("methods").at("coxnet-lasso").at("brier").get<double>(), brier.at("mean").get<double>(), 1e-12);

  ASSERT_EQ(run("fit -c " + cfg.string() + " -o " + (kRoot / "model").string()), 0) << slurp(kRoot / "stderr.txt");
  const fs::path pred = kRoot / "pred.csv";
  ASSERT_EQ(run("predict -m " + (kRoot / "model" / "model.json").string() + " --covariates " +
                (kRoot / "flow_data" / "survival.csv").string() + " --longitudinal " +
                (kRoot / "flow_data" / "longitudinal.csv").string() + " -o " + pred.string()),
            0)
      << slurp(kRoot / "stderr.txt");
  const std::string p = slurp(pred);
  EXPECT_EQ(p.rfind("subject,method,prediction\n", 0), 0u);
  EXPECT_EQ(std::count(p.begin(), p.end(), '\n'), 81);
}

TEST_F(Cli, EvaluateRejectsBadPredictions) {
  const auto surv = write_file("ev_surv.csv", "id,time,event\na,5,1\nb,8,0\nc,6,0\n");
  const auto bad = write_file("ev_bad.csv", "subject,method,prediction\na,m,1.5\nb,m,0.2\n");
  EXPECT_EQ(run("evaluate -p " + bad.string() + " -s " + surv.string() + " --t-lm 4 --t-hor 3"), 3);
  const auto dup = write_file("ev_dup.csv", "subject,method,prediction\na,m,0.5\na,m,0.2\n");
  EXPECT_EQ(run("evaluate -p " + dup.string() + " -s " + surv.string() + " --t-lm 4 --t-hor 3"), 3);
  const auto none = write_file("ev_none.csv", "subject,method,prediction\nz,m,0.5\n");
  EXPECT_EQ(run("evaluate -p " + none.string() + " -s " + surv.string() + " --t-lm 4 --t-hor 3"), 3);
  const auto ok = write_file("ev_ok.csv", "subject,method,prediction\na,m,0.9\nb,m,0.2\nc,m,0.4\n");
  EXPECT_EQ(run("evaluate -p " + ok.string() + " -s " + surv.string() + " --t-lm 4 --t-hor 3"), 0)
      << slurp(kRoot / "stderr.txt");
  const json ev = json::parse(slurp(kRoot / "stdout.txt"));
  EXPECT_EQ(ev.at("methods").at("m").at("n_cases").get<int>(), 1);
  EXPECT_EQ(ev.at("methods").at("m").at("n_controls").get<int>(), 1);
  EXPECT_EQ(run("evaluate -p " + (kRoot / "missing.csv").string() + " -s " + surv.string() + " --t-lm 4 --t-hor 3"),
            2);
}
