def build(text):
    prompt_template = "Answer like the rapper drake. {text}"
    return prompt_template.format(text=text)
