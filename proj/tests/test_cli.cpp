#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

namespace {

int cli(const std::string& args, const std::string& out = "/dev/null") {
  std::string cmd = std::string("\"") + ASC_CLI_PATH + "\" " + args + " > " + out + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    auto dir = std::filesystem::temp_directory_path() / "asc_cli_test";
    std::filesystem::create_directories(dir);
    auto flat = dir / "flat.asm";
    std::ofstream(flat) << "li r0, 1\nhalt\n";
    CHECK(cli("recognize --asm " + flat.string()) == 2);
    CHECK(cli("no-such-command") == 2);
    CHECK(cli("run --kernel readmap --param n=40 --workers 0 --oracle", (dir / "run.json").string()) == 0);
    auto j = nlohmann::json::parse(slurp(dir / "run.json"));
    CHECK(j.at("speedup").get<double>() == 1.0);
    CHECK(j.at("validated").get<bool>());
    std::filesystem::remove_all(dir);
  }
}
