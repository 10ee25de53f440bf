#include "skpub/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace skpub {

namespace {

using nlohmann::json;

RawTerms parse_terms(const json &j) {
  RawTerms out;
  for (const auto &e : j.at("terms")) {
    if (!e.is_array() || e.size() != 2)
      throw Error("terms must be [term, count] pairs");
    auto count = e[1].get<std::int64_t>();
    if (count <= 0)
      throw Error("term counts must be positive");
    out.emplace_back(e[0].get<std::string>(), static_cast<std::uint32_t>(count));
  }
  if (out.empty())
    throw Error("record without terms");
  return out;
}

json terms_json(const RawTerms &terms) {
  json arr = json::array();
  for (const auto &[t, c] : terms)
    arr.push_back(json::array({t, c}));
  return arr;
}

template <class F> void for_each_line(std::istream &in, F &&f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      f(json::parse(line));
    } catch (const json::exception &e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error &e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

} // namespace

std::vector<RawMessage> generate_messages(const GeneratorConfig &config, std::mt19937_64 &rng) {
  if (config.vocabulary == 0 || config.min_tokens == 0 || config.min_tokens > config.max_tokens)
    throw Error("invalid generator keyword settings");
  std::vector<double> zipf(config.vocabulary);
  for (std::size_t r = 0; r < zipf.size(); ++r)
    zipf[r] = 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
  std::discrete_distribution<std::size_t> word(zipf.begin(), zipf.end());
  std::uniform_int_distribution<std::uint32_t> tokens(config.min_tokens, config.max_tokens);

  const Rect &b = config.bounds;
  const double w = b.max_x - b.min_x, h = b.max_y - b.min_y;
  std::uniform_real_distribution<double> ux(b.min_x, b.max_x), uy(b.min_y, b.max_y);
  std::vector<Point> centers;
  std::vector<double> weights;
  for (std::size_t c = 0; c < config.clusters; ++c) {
    centers.push_back({ux(rng), uy(rng)});
    weights.push_back(1.0 / static_cast<double>(c + 1));
  }
  std::discrete_distribution<std::size_t> cluster(weights.begin(), weights.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution uniform_place(centers.empty() ? 1.0 : config.background);
  std::exponential_distribution<double> gap(config.rate);

  std::vector<RawMessage> out;
  out.reserve(config.messages);
  double t = 0.0;
  for (std::size_t i = 0; i < config.messages; ++i) {
    RawMessage m;
    m.id = static_cast<MessageId>(i);
    t += gap(rng);
    m.t = t;
    if (uniform_place(rng)) {
      m.lon = ux(rng);
      m.lat = uy(rng);
    } else {
      Point c = centers[cluster(rng)];
      m.lon = std::clamp(c.x + gauss(rng) * config.cluster_spread * w, b.min_x, b.max_x);
      m.lat = std::clamp(c.y + gauss(rng) * config.cluster_spread * h, b.min_y, b.max_y);
    }
    std::map<std::size_t, std::uint32_t> counts;
    for (std::uint32_t n = tokens(rng); n > 0; --n)
      ++counts[word(rng)];
    for (const auto &[r, c] : counts)
      m.terms.emplace_back("w" + std::to_string(r), c);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<RawSubscription> generate_subscriptions(std::span<const RawMessage> messages, std::size_t count,
                                                    std::uint32_t k, const Vocabulary &vocab,
                                                    std::mt19937_64 &rng, std::uint32_t max_keywords) {
  std::vector<RawSubscription> out;
  if (count == 0)
    return out;
  if (messages.empty())
    throw Error("cannot draw subscriptions from an empty message set");
  if (max_keywords == 0)
    throw Error("subscriptions need at least one keyword");
  std::uniform_int_distribution<std::size_t> pick(0, messages.size() - 1);
  std::uniform_int_distribution<std::uint32_t> size(1, max_keywords);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t max_attempts = 1000 + 100 * count;
  std::size_t attempts = 0;
  out.reserve(count);
  while (out.size() < count) {
    if (++attempts > max_attempts)
      throw Error("could not draw enough subscriptions with usable keywords");
    const std::uint32_t j = size(rng);
    const RawMessage *src = nullptr;
    for (int tries = 0; tries < 1000 && !src; ++tries) {
      const RawMessage &m = messages[pick(rng)];
      if (m.terms.size() >= j)
        src = &m;
    }
    if (!src)
      continue;
    RawTerms terms = src->terms;
    std::shuffle(terms.begin(), terms.end(), rng);
    terms.resize(j);
    std::sort(terms.begin(), terms.end());
    bool usable = false;
    for (const auto &[term, c] : terms) {
      auto r = vocab.rank(term);
      usable = usable || (r && vocab.idf(*r) > 0.0);
    }
    if (!usable)
      continue;
    double alpha = 0.0;
    while (!(alpha > 0.0 && alpha < 1.0))
      alpha = unit(rng);
    RawSubscription s;
    s.id = static_cast<SubId>(out.size());
    s.lat = src->lat;
    s.lon = src->lon;
    s.terms = std::move(terms);
    s.k = k;
    s.alpha = alpha;
    out.push_back(std::move(s));
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const RawMessage> messages) {
  std::unordered_map<std::string, std::uint64_t> df;
  for (const auto &m : messages) {
    std::vector<const std::string *> seen;
    for (const auto &[term, count] : m.terms) {
      if (std::none_of(seen.begin(), seen.end(), [&](const std::string *s) { return *s == term; })) {
        seen.push_back(&term);
        ++df[term];
      }
    }
  }
  return Vocabulary::from_counts(std::move(df), messages.size());
}

Rect bounding_box(std::span<const RawMessage> messages, double pad) {
  if (messages.empty())
    throw Error("bounding box of an empty message set");
  Rect r{messages[0].lon, messages[0].lat, messages[0].lon, messages[0].lat};
  for (const auto &m : messages) {
    r.min_x = std::min(r.min_x, m.lon);
    r.max_x = std::max(r.max_x, m.lon);
    r.min_y = std::min(r.min_y, m.lat);
    r.max_y = std::max(r.max_y, m.lat);
  }
  double dx = std::max(r.max_x - r.min_x, 1e-9) * pad + 1e-9;
  double dy = std::max(r.max_y - r.min_y, 1e-9) * pad + 1e-9;
  return {r.min_x - dx, r.min_y - dy, r.max_x + dx, r.max_y + dy};
}

Message to_message(const RawMessage &raw, const Vocabulary &vocab) {
  Message m;
  m.id = raw.id;
  m.t = raw.t;
  m.loc = {raw.lon, raw.lat};
  m.terms = build_weights(raw.terms, vocab);
  return m;
}

Subscription to_subscription(const RawSubscription &raw, const Vocabulary &vocab) {
  Subscription s;
  s.id = raw.id;
  s.loc = {raw.lon, raw.lat};
  s.k = raw.k;
  s.alpha = raw.alpha;
  s.terms = build_weights(raw.terms, vocab);
  return s;
}

std::vector<RawMessage> read_messages(std::istream &in) {
  std::vector<RawMessage> out;
  for_each_line(in, [&](const json &j) {
    RawMessage m;
    m.id = j.at("id").get<MessageId>();
    m.t = j.at("t").get<double>();
    m.lat = j.at("lat").get<double>();
    m.lon = j.at("lon").get<double>();
    m.terms = parse_terms(j);
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<RawSubscription> read_subscriptions(std::istream &in) {
  std::vector<RawSubscription> out;
  for_each_line(in, [&](const json &j) {
    RawSubscription s;
    s.id = j.at("id").get<SubId>();
    s.lat = j.at("lat").get<double>();
    s.lon = j.at("lon").get<double>();
    s.terms = parse_terms(j);
    s.k = j.value("k", 20u);
    s.alpha = j.value("alpha", 0.5);
    out.push_back(std::move(s));
  });
  return out;
}

void write_messages(std::ostream &out, std::span<const RawMessage> messages) {
  for (const auto &m : messages)
    out << json{{"id", m.id}, {"t", m.t}, {"lat", m.lat}, {"lon", m.lon}, {"terms", terms_json(m.terms)}}.dump()
        << '\n';
}

void write_subscriptions(std::ostream &out, std::span<const RawSubscription> subs) {
  for (const auto &s : subs)
    out << json{{"id", s.id},   {"lat", s.lat}, {"lon", s.lon}, {"terms", terms_json(s.terms)},
                {"k", s.k},     {"alpha", s.alpha}}
               .dump()
        << '\n';
}

void write_delivery_log(std::ostream &out, std::span<const DeliveryEvent> events) {
  for (const auto &e : events)
    out << json{{"msg", e.msg}, {"sub", e.sub}, {"score", e.score}, {"evicted", e.evicted}}.dump() << '\n';
}

std::vector<RawMessage> read_messages_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open " + path);
  return read_messages(in);
}

std::vector<RawSubscription> read_subscriptions_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open " + path);
  return read_subscriptions(in);
}

Workload make_workload(std::span<const RawMessage> messages, std::span<const RawSubscription> subs) {
  if (messages.empty())
    throw Error("workload without messages");
  Workload w{Space(bounding_box(messages)), build_vocabulary(messages), {}, {}};
  w.messages.reserve(messages.size());
  for (const auto &raw : messages) {
    try {
      w.messages.push_back(to_message(raw, w.vocab));
    } catch (const Error &) {
      // Only zero-idf keywords: the message can never match anything.
    }
  }
  for (const auto &raw : subs) {
    if (!w.space.bounds.contains({raw.lon, raw.lat}))
      throw Error("subscription " + std::to_string(raw.id) + " lies outside the message bounds");
    w.subscriptions.push_back(to_subscription(raw, w.vocab));
  }
  return w;
}

Workload synthetic_workload(const GeneratorConfig &gen, std::size_t subs, std::uint32_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto messages = generate_messages(gen, rng);
  Vocabulary vocab = build_vocabulary(messages);
  auto raw_subs = generate_subscriptions(messages, subs, k, vocab, rng);
  return make_workload(messages, raw_subs);
}

} // namespace skpub
