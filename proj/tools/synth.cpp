// Writes synthetic two-column CoNLL data (word, tag) for the toy languages.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "xner/error.hpp"
#include "xner/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic NER data"};
  std::string lang = "alpha", scheme = "IOB1", stream = "corpus", out;
  std::size_t n = 50;
  std::uint64_t seed = 1;
  app.add_option("--lang", lang, "alpha or beta")->check(CLI::IsMember({"alpha", "beta"}));
  app.add_option("-n,--sentences", n, "number of sentences");
  app.add_option("--seed", seed, "random seed")->required();
  app.add_option("--scheme", scheme, "IOB1, IOBES or IO");
  app.add_option("--stream", stream, "substream name (use different names for train/dev/test)");
  app.add_option("-o,--out", out, "output file (default stdout)");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto style = lang == "alpha" ? xner::synthetic::alpha() : xner::synthetic::beta();
    const auto c = xner::synthetic::corpus(style, n, xner::parse_scheme(scheme), seed, stream);
    const xner::ColumnLayout layout{2, 0, 1};
    if (out.empty()) {
      xner::write_conll(std::cout, c, layout);
    } else {
      std::ofstream os(out);
      if (!os) throw xner::ConfigError("cannot write '" + out + "'");
      xner::write_conll(os, c, layout);
    }
  } catch (const xner::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  }
  return 0;
}
