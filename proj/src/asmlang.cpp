#include "asc/asmlang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <set>

namespace asc {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (base == 10 && !neg && v > static_cast<std::uint64_t>(INT64_MAX)) return std::nullopt;
  if (base == 10 && neg && v > static_cast<std::uint64_t>(INT64_MAX) + 1) return std::nullopt;
  return static_cast<std::int64_t>(neg ? 0 - v : v);
}

std::optional<std::uint8_t> parse_reg(std::string_view s) {
  s = trim(s);
  if (s.size() != 2 || s[0] != 'r' || s[1] < '0' || s[1] > '7') return std::nullopt;
  return static_cast<std::uint8_t>(s[1] - '0');
}

struct Pending {
  std::size_t index;
  std::string label;
  std::size_t line;
};

class Parser {
 public:
  Program run(std::string_view text) {
    std::size_t line_no = 0;
    while (!text.empty()) {
      ++line_no;
      std::size_t nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      line_ = line_no;
      parse_line(line);
    }
    finish();
    if (!diags_.empty()) throw AsmError(std::move(diags_));
    return std::move(prog_);
  }

 private:
  void error(std::string msg) { diags_.push_back({line_, std::move(msg)}); }

  void parse_line(std::string_view line) {
    if (auto c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    // Leading label definitions.
    while (true) {
      std::size_t colon = line.find(':');
      if (colon == std::string_view::npos) break;
      std::string_view name = trim(line.substr(0, colon));
      if (!is_identifier(name)) break;
      define_label(std::string(name));
      line = trim(line.substr(colon + 1));
    }
    if (line.empty()) return;
    if (line[0] == '.') {
      directive(line);
      return;
    }
    std::size_t sp = 0;
    while (sp < line.size() && !std::isspace(static_cast<unsigned char>(line[sp]))) ++sp;
    std::string_view mnem = line.substr(0, sp);
    auto op = opcode_from_name(mnem);
    if (!op) {
      error("unknown opcode '" + std::string(mnem) + "'");
      return;
    }
    instruction(*op, split_operands(line.substr(sp)));
  }

  void define_label(std::string name) {
    if (prog_.labels.count(name)) {
      error("duplicate label '" + name + "'");
      return;
    }
    prog_.labels[name] = static_cast<std::uint32_t>(prog_.instructions.size());
  }

  void directive(std::string_view line) {
    std::size_t sp = 0;
    while (sp < line.size() && !std::isspace(static_cast<unsigned char>(line[sp]))) ++sp;
    std::string name(line.substr(0, sp));
    std::vector<std::string_view> args;
    std::string_view rest = trim(line.substr(sp));
    while (!rest.empty()) {
      std::size_t e = 0;
      while (e < rest.size() && !std::isspace(static_cast<unsigned char>(rest[e]))) ++e;
      args.push_back(rest.substr(0, e));
      rest = trim(rest.substr(e));
    }
    if (!seen_directives_.insert(name).second && name != ".entry") {
      error("repeated directive " + name);
      return;
    }
    auto unsigned_arg = [&](std::size_t i) -> std::optional<std::uint64_t> {
      auto v = parse_int(args[i]);
      if (!v || *v < 0) {
        error("bad operand '" + std::string(args[i]) + "' for " + name);
        return std::nullopt;
      }
      return static_cast<std::uint64_t>(*v);
    };
    if (name == ".mem") {
      if (args.size() != 1) return error(".mem expects 1 operand");
      if (auto v = unsigned_arg(0)) prog_.memsize = *v;
    } else if (name == ".input" || name == ".output") {
      if (args.size() != 2) return error(name + " expects 2 operands");
      auto s = unsigned_arg(0);
      auto l = unsigned_arg(1);
      if (!s || !l) return;
      Region& r = name == ".input" ? prog_.input : prog_.output;
      r = {*s, *l};
      region_lines_.push_back({name, line_});
    } else if (name == ".entry") {
      if (args.size() != 1 || !is_identifier(args[0])) return error(".entry expects a label");
      if (entry_label_) return error("repeated directive .entry");
      entry_label_ = Pending{0, std::string(args[0]), line_};
    } else {
      error("unknown directive " + name);
    }
  }

  void instruction(Opcode op, const std::vector<std::string_view>& ops) {
    Instruction ins;
    ins.op = op;
    ins.line = static_cast<std::uint32_t>(line_);
    const OpInfo& info = op_info(op);
    std::size_t want = 0;
    switch (info.format) {
      case Format::RegImm:
      case Format::RegReg:
      case Format::Load:
      case Format::Store:
      case Format::Compare: want = 2; break;
      case Format::Reg3:
      case Format::RegRegImm: want = 3; break;
      case Format::Jump: want = 1; break;
      case Format::None: want = 0; break;
    }
    if (ops.size() != want) {
      error(std::string(info.name) + " expects " + std::to_string(want) + " operand(s), got " +
            std::to_string(ops.size()));
      return;
    }
    bool ok = true;
    auto reg = [&](std::string_view s, std::uint8_t& out) {
      if (auto r = parse_reg(s)) {
        out = *r;
      } else {
        error("bad register '" + std::string(s) + "'");
        ok = false;
      }
    };
    auto imm = [&](std::string_view s) {
      if (auto v = parse_int(s)) {
        ins.imm = *v;
      } else {
        error("bad immediate '" + std::string(s) + "'");
        ok = false;
      }
    };
    auto mem = [&](std::string_view s) {
      s = trim(s);
      if (s.size() < 3 || s.front() != '[' || s.back() != ']') {
        error("bad memory operand '" + std::string(s) + "'");
        ok = false;
        return;
      }
      std::string_view in = trim(s.substr(1, s.size() - 2));
      std::size_t k = in.find_first_of("+-");
      reg(in.substr(0, k), ins.ra);
      if (k != std::string_view::npos) {
        std::string_view off = trim(in.substr(k + 1));
        if (off.empty() || off[0] == '+' || off[0] == '-') {
          error("bad memory operand '" + std::string(s) + "'");
          ok = false;
          return;
        }
        imm(in[k] == '-' ? "-" + std::string(off) : std::string(off));
      }
    };
    switch (info.format) {
      case Format::RegImm: reg(ops[0], ins.rd); imm(ops[1]); break;
      case Format::RegReg: reg(ops[0], ins.rd); reg(ops[1], ins.ra); break;
      case Format::Load: reg(ops[0], ins.rd); mem(ops[1]); break;
      case Format::Store: mem(ops[0]); reg(ops[1], ins.rb); break;
      case Format::Reg3: reg(ops[0], ins.rd); reg(ops[1], ins.ra); reg(ops[2], ins.rb); break;
      case Format::RegRegImm: reg(ops[0], ins.rd); reg(ops[1], ins.ra); imm(ops[2]); break;
      case Format::Compare: reg(ops[0], ins.ra); reg(ops[1], ins.rb); break;
      case Format::Jump:
        if (!is_identifier(ops[0])) {
          error("bad jump target '" + std::string(ops[0]) + "'");
          ok = false;
        } else {
          pending_.push_back({prog_.instructions.size(), std::string(ops[0]), line_});
        }
        break;
      case Format::None: break;
    }
    if (ok) prog_.instructions.push_back(ins);
  }

  void finish() {
    for (const auto& p : pending_) {
      auto it = prog_.labels.find(p.label);
      if (it == prog_.labels.end()) {
        diags_.push_back({p.line, "unresolved label '" + p.label + "'"});
        continue;
      }
      if (p.index < prog_.instructions.size()) prog_.instructions[p.index].target = it->second;
    }
    for (const auto& [name, n] : prog_.labels) {
      if (n >= prog_.instructions.size())
        diags_.push_back({line_, "label '" + name + "' does not precede an instruction"});
    }
    if (entry_label_) {
      auto it = prog_.labels.find(entry_label_->label);
      if (it == prog_.labels.end())
        diags_.push_back({entry_label_->line, "unresolved label '" + entry_label_->label + "'"});
      else
        prog_.entry = it->second;
    }
    for (const auto& [name, l] : region_lines_) {
      const Region& r = name == ".input" ? prog_.input : prog_.output;
      if (r.start > prog_.memsize || r.len > prog_.memsize - r.start)
        diags_.push_back({l, name + " region exceeds memory size " + std::to_string(prog_.memsize)});
    }
    if (prog_.instructions.empty() && diags_.empty()) diags_.push_back({line_, "program has no instructions"});
  }

  Program prog_;
  std::vector<Diagnostic> diags_;
  std::vector<Pending> pending_;
  std::optional<Pending> entry_label_;
  std::vector<std::pair<std::string, std::size_t>> region_lines_;
  std::set<std::string> seen_directives_;
  std::size_t line_ = 0;
};

std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) {
    if (!s.empty()) s += "\n";
    s += "line " + std::to_string(d.line) + ": " + d.message;
  }
  return s;
}

}  // namespace

AsmError::AsmError(std::vector<Diagnostic> diags)
    : Error(format_diagnostics(diags)), diags_(std::move(diags)) {}

StateVector Program::initial_state(std::span<const std::uint8_t> input_bytes) const {
  if (input_bytes.size() > input.len)
    throw StructuralError("input of " + std::to_string(input_bytes.size()) +
                          " bytes exceeds the input region (" + std::to_string(input.len) + ")");
  StateVector z(memsize);
  std::copy(input_bytes.begin(), input_bytes.end(), z.mem() + input.start);
  z.ip = entry;
  return z;
}

std::vector<std::uint8_t> Program::output_bytes(const StateVector& z) const {
  if (z.memsize() != memsize) throw StructuralError("state does not belong to this program");
  return {z.mem() + output.start, z.mem() + output.start + output.len};
}

std::uint32_t Program::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw Error("no label '" + name + "'");
  return it->second;
}

std::string expand_placeholders(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::vector<Diagnostic> diags;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      std::size_t close = text.find('}', i + 2);
      if (close == std::string_view::npos) {
        diags.push_back({line, "unterminated placeholder"});
        break;
      }
      std::string name(text.substr(i + 2, close - i - 2));
      auto it = vars.find(name);
      if (it == vars.end())
        diags.push_back({line, "unknown placeholder '" + name + "'"});
      else
        out += it->second;
      i = close;
      continue;
    }
    out += text[i];
  }
  if (!diags.empty()) throw AsmError(std::move(diags));
  return out;
}

Program parse(std::string_view text) { return Parser().run(text); }

std::vector<std::uint32_t> successors(const Program& p, std::uint32_t ip) {
  const Instruction& ins = p.instructions.at(ip);
  const auto n = static_cast<std::uint32_t>(p.instructions.size());
  std::vector<std::uint32_t> out;
  if (ins.op == Opcode::Halt) return out;
  if (ins.op == Opcode::Jmp) return {ins.target};
  if (is_conditional_jump(ins.op)) out.push_back(ins.target);
  if (ip + 1 < n && (out.empty() || out[0] != ip + 1)) out.push_back(ip + 1);
  return out;
}

LivenessInfo liveness(const Program& p) {
  const std::size_t n = p.instructions.size();
  std::vector<std::vector<std::uint32_t>> succ(n);
  std::vector<LiveSet> use(n), kill(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    succ[i] = successors(p, i);
    use[i] = uses(p.instructions[i]);
    kill[i] = kills(p.instructions[i]);
  }
  LivenessInfo info;
  info.live_in.assign(n, LiveSet{});
  bool changed = true;
  while (changed) {
    changed = false;
    ++info.sweeps;
    for (std::size_t k = n; k-- > 0;) {
      LiveSet out;
      for (auto s : succ[k]) out = out | info.live_in[s];
      LiveSet in = use[k] | (out - kill[k]);
      if (!(in == info.live_in[k])) {
        info.live_in[k] = in;
        changed = true;
      }
    }
  }
  return info;
}

std::vector<std::uint32_t> candidates(const Program& p) {
  std::set<std::uint32_t> heads;
  for (std::uint32_t i = 0; i < p.instructions.size(); ++i) {
    const Instruction& ins = p.instructions[i];
    if (is_jump(ins.op) && ins.target <= i) heads.insert(ins.target);
  }
  return {heads.begin(), heads.end()};
}

}  // namespace asc
