#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "jmest/model.hpp"
#include "oracles.hpp"

using namespace jmest;

namespace {
Hamiltonian parse_h(const std::string& text) {
  std::istringstream in(text);
  return load_hamiltonian(in);
}
ReadoutNoise parse_noise(const std::string& text, int n, bool def = false) {
  std::istringstream in(text);
  return load_noise(in, n, def);
}
}  // namespace

TEST(LoadHamiltonian, Basic) {
  auto h = parse_h("XI 1.0\nXX 1.0\n");
  EXPECT_EQ(h.qubits(), 2);
  EXPECT_EQ(h.size(), 2u);
  EXPECT_DOUBLE_EQ(h.terms().at(PauliString::parse("XX")), 1.0);
}

TEST(LoadHamiltonian, MergesDuplicates) {
  auto h = parse_h("ZZ 0.5\nZZ 0.5");
  ASSERT_EQ(h.size(), 1u);
  EXPECT_DOUBLE_EQ(h.terms().begin()->second, 1.0);
}

TEST(LoadHamiltonian, CommentsBlankLinesCrlf) {
  auto h = parse_h("# header\r\n\r\nXY -0.25 # trailing\r\n  IZ 2e-1\r\n");
  EXPECT_EQ(h.size(), 2u);
  EXPECT_DOUBLE_EQ(h.terms().at(PauliString::parse("IZ")), 0.2);
}

TEST(LoadHamiltonian, Errors) {
  try {
    parse_h("XX 1\nXY 1e400\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_h("XX 1\nXYZ 1\n"), ParseError);
  EXPECT_THROW(parse_h("XX\n"), ParseError);
  EXPECT_THROW(parse_h("XQ 1\n"), ParseError);
  EXPECT_THROW(parse_h("XX nan\n"), ParseError);
  EXPECT_THROW(parse_h("XX inf\n"), ParseError);
  EXPECT_THROW(parse_h("XX 1.0abc\n"), ParseError);
  EXPECT_THROW(parse_h("# nothing\n"), ParseError);
}

TEST(LoadHamiltonian, RoundTripRandom) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> nq(1, 5);
    auto h = oracle::random_hamiltonian(nq(gen), 12, gen);
    std::ostringstream out;
    write_hamiltonian(out, h);
    auto back = parse_h(out.str());
    ASSERT_EQ(back, h);
    // Term count never exceeds the number of lines.
    ASSERT_LE(back.size(), h.size());
  }
}

TEST(LoadNoise, Basic) {
  auto id = parse_noise("0 1.0 1.0\n1 1.0 1.0\n", 2);
  EXPECT_TRUE(id.is_identity());
  auto nz = parse_noise("0 0.95 0.9\n", 1);
  EXPECT_DOUBLE_EQ(nz[0].alpha, 0.95);
  EXPECT_DOUBLE_EQ(nz[0].beta, 0.9);
}

TEST(LoadNoise, Errors) {
  EXPECT_THROW(parse_noise("0 0.3 0.9\n", 1), ParseError);
  EXPECT_THROW(parse_noise("0 0.9 1.1\n", 1), ParseError);
  EXPECT_THROW(parse_noise("0 0.9 0.9\n", 2), ParseError);
  EXPECT_THROW(parse_noise("0 0.9 0.9\n0 0.9 0.9\n", 1), ParseError);
  EXPECT_THROW(parse_noise("2 0.9 0.9\n", 2), ParseError);
  EXPECT_THROW(parse_noise("-1 0.9 0.9\n", 2), ParseError);
  EXPECT_THROW(parse_noise("0 0.9\n", 1), ParseError);
}

TEST(LoadNoise, DefaultIdentity) {
  auto n = parse_noise("1 0.9 0.8\n", 3, true);
  EXPECT_TRUE(n[0] == StochasticMatrix2{});
  EXPECT_DOUBLE_EQ(n[1].beta, 0.8);
  EXPECT_TRUE(n[2] == StochasticMatrix2{});
}

TEST(LoadNoise, RoundTripRandom) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<StochasticMatrix2> q;
    for (int i = 0; i < 4; ++i) q.push_back({u(gen), u(gen)});
    ReadoutNoise noise(q);
    std::ostringstream out;
    write_noise(out, noise);
    ASSERT_EQ(parse_noise(out.str(), 4), noise);
    std::istringstream again(out.str());
    ASSERT_EQ(load_noise(again), noise);
  }
}

TEST(StochasticMatrix, ColumnsSumToOne) {
  StochasticMatrix2 m{0.9, 0.7};
  auto t = m.matrix();
  EXPECT_NEAR(t.col(0).sum(), 1.0, 1e-15);
  EXPECT_NEAR(t.col(1).sum(), 1.0, 1e-15);
  EXPECT_TRUE((t.array() >= 0.0).all());
  EXPECT_NEAR(m.strength(), 0.6, 1e-15);
}

TEST(LoadVisibilities, RoundTrip) {
  std::mt19937_64 gen(1);
  auto v = oracle::random_visibilities(3, gen);
  std::ostringstream out;
  write_visibilities(out, v);
  std::istringstream in(out.str());
  EXPECT_EQ(load_visibilities(in, 3), v);
  std::istringstream bad("0 0.5 0.5 1.5\n");
  EXPECT_THROW(load_visibilities(bad, 1), ParseError);
}
