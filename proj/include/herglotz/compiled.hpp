#pragma once

// Expressions flattened to a postfix tape over numbered input slots, for
// evaluation in inner loops. Constants are folded in at compile time.

#include "herglotz/expr.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace herglotz {

using SlotMap = std::map<Symbol, size_t>;

class CompiledExpr {
 public:
  CompiledExpr() = default;

  // Every symbol of `e` must be in `slots` or bound in `constants`.
  CompiledExpr(const Expr& e, const SlotMap& slots, const Binding& constants) {
    size_t depth = 0;
    emit(e, slots, constants, depth);
  }

  double operator()(std::span<const double> slots) const {
    thread_local std::vector<double> stack;
    if (stack.size() < max_depth_) stack.resize(max_depth_);
    size_t sp = 0;
    for (const auto& ins : code_) {
      switch (ins.op) {
        case Op::Const:
          stack[sp++] = ins.value;
          break;
        case Op::Slot:
          stack[sp++] = slots[ins.slot];
          break;
        case Op::Add: {
          double s = stack[sp - ins.count];
          for (size_t k = sp - ins.count + 1; k < sp; ++k) s += stack[k];
          sp -= ins.count;
          stack[sp++] = s;
          break;
        }
        case Op::Mul: {
          double p = stack[sp - ins.count];
          for (size_t k = sp - ins.count + 1; k < sp; ++k) p *= stack[k];
          sp -= ins.count;
          stack[sp++] = p;
          break;
        }
        case Op::Neg:
          stack[sp - 1] = -stack[sp - 1];
          break;
        case Op::Pow: {
          double b = stack[sp - 1];
          double r = 1;
          for (long i = 0; i < ins.exponent; ++i) r *= b;
          stack[sp - 1] = r;
          break;
        }
        case Op::Call:
          stack[sp - 1] = apply_func(ins.func, stack[sp - 1]);
          break;
      }
    }
    return sp == 0 ? 0.0 : stack[0];
  }

  bool is_constant() const { return code_.size() == 1 && code_[0].op == Op::Const; }

 private:
  enum class Op : std::uint8_t { Const, Slot, Add, Mul, Neg, Pow, Call };
  struct Instr {
    Op op = Op::Const;
    Func func = Func::Sin;
    size_t count = 0;
    long exponent = 0;
    size_t slot = 0;
    double value = 0;
  };

  void push(Instr ins, size_t& depth, size_t pops) {
    code_.push_back(ins);
    depth = depth - pops + 1;
    max_depth_ = std::max(max_depth_, depth);
  }

  void emit(const Expr& e, const SlotMap& slots, const Binding& constants, size_t& depth) {
    switch (e.kind()) {
      case Expr::Kind::Number:
        push({.op = Op::Const, .value = e.number().to_double()}, depth, 0);
        return;
      case Expr::Kind::Symbol: {
        if (auto it = slots.find(e.symbol()); it != slots.end()) {
          push({.op = Op::Slot, .slot = it->second}, depth, 0);
          return;
        }
        if (auto it = constants.find(e.symbol()); it != constants.end()) {
          push({.op = Op::Const, .value = it->second}, depth, 0);
          return;
        }
        throw UnboundSymbolError(e.symbol());
      }
      case Expr::Kind::Sum:
      case Expr::Kind::Product:
        for (const auto& c : e.operands()) emit(c, slots, constants, depth);
        push({.op = e.kind() == Expr::Kind::Sum ? Op::Add : Op::Mul, .count = e.operands().size()}, depth,
             e.operands().size());
        return;
      case Expr::Kind::Power:
        emit(e.operands()[0], slots, constants, depth);
        if (e.exponent() < 0) {
          push({.op = Op::Pow, .exponent = -e.exponent()}, depth, 1);
          push({.op = Op::Call, .func = Func::Inv}, depth, 1);
        } else {
          push({.op = Op::Pow, .exponent = e.exponent()}, depth, 1);
        }
        return;
      case Expr::Kind::Negate:
        emit(e.operands()[0], slots, constants, depth);
        push({.op = Op::Neg}, depth, 1);
        return;
      case Expr::Kind::Call:
        emit(e.operands()[0], slots, constants, depth);
        push({.op = Op::Call, .func = e.func()}, depth, 1);
        return;
    }
  }

  std::vector<Instr> code_;
  size_t max_depth_ = 1;
};

}  // namespace herglotz
