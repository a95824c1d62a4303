#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cmcd/config.hpp"
#include "cmcd/csv.hpp"
#include "cmcd/errors.hpp"

using namespace cmcd;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "exp.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

CsvRow sample_row() {
  CsvRow r;
  r.sweep_var = "gap";
  r.value = 0.2;
  r.method = "cmd";
  r.eval_mode = "LE";
  r.seed = 42;
  r.accuracy = 81.25;
  r.d_tv_hat = 0.1 + 0.2;  // not exactly representable in short decimal
  r.kappa_hat = std::numeric_limits<double>::quiet_NaN();
  r.eps_ab = 1e-300;
  r.eps_b = -3.5;
  r.wall_s = std::numeric_limits<double>::quiet_NaN();
  return r;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.to_text(), ExperimentConfig{}.to_text());
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, CommentsBlankLinesAndWhitespace) {
  const auto c = parse_config("# header\n\n  data.gap =  0.35  # trailing\nsweep.gaps = 0, 0.5\n");
  EXPECT_EQ(c.data.gap, 0.35);
  EXPECT_EQ(c.sweep.gaps, (std::vector<double>{0.0, 0.5}));
}

TEST(Config, EmptyListValue) {
  EXPECT_TRUE(parse_config("sweep.alphas =\n").sweep.alphas.empty());
}

TEST(Config, ToTextRoundTrips) {
  ExperimentConfig c;
  c.data.gap = 0.123456789012345;
  c.data.seed = 77;
  c.sweep.shots = {2, 3};
  c.output.dir = "elsewhere";
  c.output.timing = true;
  const auto text = c.to_text();
  EXPECT_EQ(parse_config(text).to_text(), text);
  // Every key appears exactly once.
  for (const auto& k : config_keys()) {
    const auto first = text.find(k + " =");
    ASSERT_NE(first, std::string::npos) << k;
    EXPECT_EQ(text.find("\n" + k + " =", first + 1), std::string::npos) << k;
  }
}

TEST(Config, ErrorsCarryOriginAndLine) {
  EXPECT_NE(error_of("data.gap = 0.1\nno.such = 3\n").find("exp.cfg:2: unknown key 'no.such'"),
            std::string::npos);
  EXPECT_NE(error_of("data.gap = 0.1\n\ndata.gap = 0.2\n").find("exp.cfg:3:"), std::string::npos);
  EXPECT_NE(error_of("data.gap = 0.1\n\ndata.gap = 0.2\n").find("set twice"), std::string::npos);
  EXPECT_NE(error_of("just words\n").find("exp.cfg:1: expected 'key = value'"),
            std::string::npos);
  EXPECT_NE(error_of("# c\ndata.gap = abc\n").find("exp.cfg:2: data.gap"), std::string::npos);
  EXPECT_NE(error_of("output.plots = maybe\n").find("boolean"), std::string::npos);
}

TEST(Config, ValidationNamesTheKey) {
  EXPECT_NE(error_of("data.gap = 1.5\n").find("gap"), std::string::npos);
  EXPECT_NE(error_of("sweep.seeds = 0\n").find("sweep.seeds"), std::string::npos);
  EXPECT_NE(error_of("augment.mask_prob = 2\n").find("augment.mask_prob"), std::string::npos);
  EXPECT_NE(error_of("sweep.ratios = 0\n").find("sweep.ratios"), std::string::npos);
}

TEST(Config, ApplySettingMatchesFileSyntax) {
  ExperimentConfig c;
  apply_setting(c, "sweep.gaps", "0.1, 0.9");
  EXPECT_EQ(c.sweep.gaps, (std::vector<double>{0.1, 0.9}));
  EXPECT_THROW(apply_setting(c, "nope", "1"), ConfigError);
}

TEST(Config, HashIgnoresOutputAndJobsOnly) {
  ExperimentConfig a, b;
  b.output.dir = "other";
  b.output.plots = false;
  b.sweep.jobs = 4;
  EXPECT_EQ(a.hash(), b.hash());
  b.data.gap = 0.3;
  EXPECT_NE(a.hash(), b.hash());
  ExperimentConfig c;
  c.pipeline.distill.tau = 0.07;
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Csv, NumbersUseShortestRoundTripForm) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(81.25), "81.25");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_number(v)), v);
}

TEST(Csv, WriteReadRoundTrip) {
  std::vector<CsvRow> rows{sample_row(), sample_row()};
  rows[1].eval_mode = "";
  rows[1].status = "diverged";
  rows[1].sweep_var = "";
  rows[1].value = std::numeric_limits<double>::quiet_NaN();
  std::stringstream ss;
  write_csv(ss, rows);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kCsvHeader);
  const auto back = read_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].sweep_var, rows[i].sweep_var);
    EXPECT_TRUE(same(back[i].value, rows[i].value));
    EXPECT_EQ(back[i].method, rows[i].method);
    EXPECT_EQ(back[i].eval_mode, rows[i].eval_mode);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_TRUE(same(back[i].d_tv_hat, rows[i].d_tv_hat));
    EXPECT_TRUE(same(back[i].kappa_hat, rows[i].kappa_hat));
    EXPECT_TRUE(same(back[i].eps_ab, rows[i].eps_ab));
    EXPECT_TRUE(same(back[i].wall_s, rows[i].wall_s));
    EXPECT_EQ(back[i].status, rows[i].status);
  }
  std::stringstream again;
  write_csv(again, back);
  EXPECT_EQ(again.str(), ss.str());
}

TEST(Csv, MalformedLinesReportTheLineNumber) {
  const std::string good = format_row(sample_row());
  auto line_error = [&](const std::string& bad) {
    std::stringstream ss(std::string(kCsvHeader) + "\n" + good + "\n" + bad + "\n");
    try {
      read_csv(ss, "r.csv");
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(line_error("gap,0.2,cmd").find("r.csv:3:"), std::string::npos);
  EXPECT_NE(line_error("gap,x,cmd,LE,1,1,1,1,1,1,1,ok").find("r.csv:3: column value"),
            std::string::npos);
  EXPECT_NE(line_error("gap,0,cmd,LE,-1,1,1,1,1,1,1,ok").find("seed"), std::string::npos);
  EXPECT_NE(line_error("gap,0,cmd,XX,1,1,1,1,1,1,1,ok").find("eval_mode"), std::string::npos);
  EXPECT_NE(line_error("gap,0,cmd,LE,1,1,1,1,1,1,1,bad").find("status"), std::string::npos);
  EXPECT_NE(line_error("gap,0,,LE,1,1,1,1,1,1,1,ok").find("empty method"), std::string::npos);
}

TEST(Csv, HeaderIsChecked) {
  std::stringstream empty;
  EXPECT_THROW(read_csv(empty), FormatError);
  std::stringstream wrong("a,b,c\n");
  EXPECT_THROW(read_csv(wrong), FormatError);
}
