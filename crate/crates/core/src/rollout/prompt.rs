/// System prompt that introduces the code-interpreter protocol.
pub const HEAD_PROMPT: &str = "The User asks a question, and you solve it. You first generate the reasoning and thinking process and then provide the User with the final answer. During the thinking process, **you can generate python code** for efficient searching, optimization, and computing with the format of starting the python block with ``` python. **A code query must involve only a single script that uses 'print' function for the output.**. Once the code script is complete, stop the generation. Then, the code interpreter platform will execute the code and return the execution output and error. Once you feel you are ready for the final answer, directly return the answer with the format <<<answer content>>> at the end of your response. Otherwise, you can continue your reasoning process and possibly generate more code query to solve the problem.";

/// Suffix of the variant that requires at least one code block.
pub const FORCED_CODE_SUFFIX: &str = "You must use at least one code block before answering.";

/// User notice sent when the model emits code after the call budget is spent.
pub const BUDGET_NOTICE: &str = "Code budget exhausted. Provide the final answer now in <<<...>>> format.";

/// Prefix of every injected execution segment.
pub const INJECTION_PREFIX: &str = "Code Execution Results:\n";

pub const TRUNCATION_MARKER: &str = "\n[output truncated]";

/// The built-in head prompt variants, indexed by variant id.
pub fn default_prompt_variants() -> Vec<String> {
    vec![HEAD_PROMPT.to_string(), format!("{HEAD_PROMPT} {FORCED_CODE_SUFFIX}")]
}
